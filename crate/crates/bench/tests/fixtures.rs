use tpcnet_bench::traces;

#[test]
fn fixture_is_deterministic() {
    let a = traces(4);
    assert_eq!(a.len(), 4);
    assert_eq!(a, traces(4));
}
