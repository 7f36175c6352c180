use proptest::prelude::*;

use prk_core::phrase::{read_phrase_vectors, write_phrase_vectors};
use prk_core::vecmath::cosine_similarity;
use prk_core::{encode_phrase, triplet_to_phrase, EmbeddingStore, Error, PhraseEmbedding, WordVector};

fn wv(token: &str, vector: Vec<f32>) -> WordVector {
    WordVector {
        token: token.to_string(),
        vector,
    }
}

fn token() -> impl Strategy<Value = String> {
    "[a-z][a-z_]{0,11}"
}

fn store_strategy() -> impl Strategy<Value = EmbeddingStore> {
    (1usize..8).prop_flat_map(|dim| {
        prop::collection::btree_map(token(), prop::collection::vec(-1e3f32..1e3, dim), 1..20)
            .prop_map(move |m| {
                EmbeddingStore::from_entries(dim, m.into_iter().map(|(t, v)| wv(&t, v))).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn binary_roundtrip_is_bit_exact(store in store_strategy()) {
        let mut buf = Vec::new();
        store.write_binary(&mut buf).unwrap();
        let back = EmbeddingStore::load_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(back.tokens(), store.tokens());
        for (a, b) in store.iter().zip(back.iter()) {
            let bits_a: Vec<u32> = a.1.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.1.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn text_roundtrip_is_exact(store in store_strategy()) {
        let mut buf = Vec::new();
        store.write_text(&mut buf).unwrap();
        let back = EmbeddingStore::load_text(buf.as_slice()).unwrap();
        prop_assert_eq!(back, store);
    }

    #[test]
    fn cosine_symmetric_and_scale_invariant(
        a in prop::collection::vec(-10.0f64..10.0, 6),
        b in prop::collection::vec(-10.0f64..10.0, 6),
        s in 0.01f64..100.0,
    ) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        let scaled: Vec<f64> = a.iter().map(|v| v * s).collect();
        prop_assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn phrase_cosine_from_slot_parts(
        h in prop::collection::vec(-1.0f32..1.0, 4),
        v1 in prop::collection::vec(-1.0f32..1.0, 4),
        v2 in prop::collection::vec(-1.0f32..1.0, 4),
        o1 in prop::collection::vec(-1.0f32..1.0, 4),
        o2 in prop::collection::vec(-1.0f32..1.0, 4),
    ) {
        let store = EmbeddingStore::from_entries(
            4,
            [wv("human", h), wv("va", v1), wv("vb", v2), wv("oa", o1), wv("ob", o2)],
        )
        .unwrap();
        let a = encode_phrase(&store, &triplet_to_phrase("human", "va", "oa").unwrap()).unwrap();
        let b = encode_phrase(&store, &triplet_to_phrase("human", "vb", "ob").unwrap()).unwrap();
        let na: f64 = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(na > 1e-3 && nb > 1e-3);
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        let assembled = (dot(a.human(), b.human()) + dot(a.verb(), b.verb()) + dot(a.object(), b.object()))
            / (na * nb);
        let direct = cosine_similarity(a.values(), b.values()).unwrap();
        prop_assert!((assembled - direct).abs() <= 1e-10);
    }
}

#[test]
fn truncated_binary_reports_error() {
    let store = EmbeddingStore::from_entries(3, [wv("a", vec![1.0, 2.0, 3.0]), wv("b", vec![4.0, 5.0, 6.0])]).unwrap();
    let mut buf = Vec::new();
    store.write_binary(&mut buf).unwrap();
    for cut in [buf.len() - 1, buf.len() - 5] {
        assert!(matches!(
            EmbeddingStore::load_binary(&buf[..cut]),
            Err(Error::Truncated(_))
        ));
    }
}

#[test]
fn phrase_vector_file_roundtrip() {
    let p = triplet_to_phrase("human", "ride", "horse").unwrap();
    let q = triplet_to_phrase("person", "sit at", "dining table").unwrap();
    let entries = vec![
        (p, PhraseEmbedding::new(vec![0.5, -1.0, 2.0]).unwrap()),
        (q, PhraseEmbedding::new(vec![0.25, 0.0, -3.5]).unwrap()),
    ];
    let mut buf = Vec::new();
    write_phrase_vectors(&mut buf, &entries).unwrap();
    assert_eq!(read_phrase_vectors(buf.as_slice()).unwrap(), entries);
}
