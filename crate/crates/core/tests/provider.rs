use std::collections::HashMap;

use edtm_core::format::write_matrix;
use edtm_core::provider::{EmbeddingProvider, ProviderConfig, RemoteConfig};
use edtm_testkit::stub::{hashed_vector, EmbeddingStub, DIM};
use ndarray::Array2;

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("document number {i}")).collect()
}

fn remote(url: String, cache: Option<&std::path::Path>) -> RemoteConfig {
    RemoteConfig {
        cache_dir: cache.map(|p| p.to_path_buf()),
        backoff_ms: 1,
        request_batch: 3,
        parallelism: 2,
        ..RemoteConfig::new(url)
    }
}

#[test]
fn file_provider_returns_the_stored_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("docs.edtm");
    let stored = Array2::from_shape_fn((3, 8), |(i, j)| (i * 8 + j) as f32 * 0.25 - 1.0);
    write_matrix(&path, &stored).unwrap();
    let p = EmbeddingProvider::new(ProviderConfig::File { path: path.clone() }).unwrap();
    let m = p.fetch(&texts(3)).unwrap();
    assert_eq!(m.values(), &stored);
    assert_eq!(p.remote_calls(), 0);
    assert!(p.fetch(&texts(4)).is_err());
}

#[test]
fn remote_provider_returns_stub_vectors_in_order() {
    let mut table = HashMap::new();
    table.insert("document number 4".to_string(), vec![9.0f32; DIM]);
    let stub = EmbeddingStub::start(table, 0);
    let p = EmbeddingProvider::new(ProviderConfig::Remote(remote(stub.url("embed"), None))).unwrap();
    let t = texts(7);
    let m = p.fetch(&t).unwrap();
    assert_eq!(m.count(), 7);
    for (i, text) in t.iter().enumerate() {
        let expected = if i == 4 { vec![9.0; DIM] } else { hashed_vector(text) };
        assert_eq!(m.row(i).to_vec(), expected);
    }
    // 7 texts in chunks of 3.
    assert_eq!(p.remote_calls(), 3);
    assert_eq!(stub.requests(), 3);
}

#[test]
fn repeated_fetch_is_served_from_cache() {
    let stub = EmbeddingStub::start(HashMap::new(), 0);
    let cache = tempfile::tempdir().unwrap();
    let config = ProviderConfig::Remote(remote(stub.url("embed"), Some(cache.path())));
    let first = EmbeddingProvider::new(config.clone()).unwrap();
    let a = first.fetch(&texts(5)).unwrap();
    assert!(first.remote_calls() > 0);

    let second = EmbeddingProvider::new(config).unwrap();
    let b = second.fetch(&texts(5)).unwrap();
    assert_eq!(second.remote_calls(), 0);
    let bits = |m: &edtm_core::costs::EmbeddingMatrix| m.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));

    // A different text list misses the cache.
    second.fetch(&texts(6)).unwrap();
    assert!(second.remote_calls() > 0);
}

#[test]
fn transient_failures_are_retried() {
    let stub = EmbeddingStub::start(HashMap::new(), 2);
    let mut cfg = remote(stub.url("embed"), None);
    cfg.parallelism = 1;
    let p = EmbeddingProvider::new(ProviderConfig::Remote(cfg)).unwrap();
    let m = p.fetch(&texts(2)).unwrap();
    assert_eq!(m.count(), 2);
    assert_eq!(p.remote_calls(), 3);
}

#[test]
fn persistent_failure_gives_up_after_three_attempts() {
    let stub = EmbeddingStub::start(HashMap::new(), usize::MAX);
    let mut cfg = remote(stub.url("embed"), None);
    cfg.parallelism = 1;
    let p = EmbeddingProvider::new(ProviderConfig::Remote(cfg)).unwrap();
    let err = p.fetch(&texts(2)).unwrap_err();
    assert!(err.to_string().contains("3 attempts"), "{err}");
    assert_eq!(p.remote_calls(), 3);
}

#[test]
fn inconsistent_dimensions_are_a_provider_error() {
    let stub = EmbeddingStub::start(HashMap::new(), 0);
    let p = EmbeddingProvider::new(ProviderConfig::Remote(remote(stub.url("ragged"), None))).unwrap();
    let err = p.fetch(&texts(3)).unwrap_err();
    assert!(matches!(err, edtm_core::Error::Provider(_)), "{err}");
}

#[test]
fn unreachable_endpoint_is_a_provider_error() {
    let mut cfg = RemoteConfig::new("http://127.0.0.1:9/embed");
    cfg.backoff_ms = 1;
    cfg.timeout_ms = 500;
    let p = EmbeddingProvider::new(ProviderConfig::Remote(cfg)).unwrap();
    assert!(matches!(p.fetch(&texts(1)), Err(edtm_core::Error::Provider(_))));
}
