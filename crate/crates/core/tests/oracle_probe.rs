//! Prints the oracle accountant's values for the fixed regression configs so
//! they can be frozen as expected constants. Run with:
//! `cargo test -p dpdsyn-core --test oracle_probe -- --ignored --nocapture`

mod support;

#[test]
#[ignore]
fn dump_oracle_values() {
    println!("-- epsilon(n, b, e, z, delta) over the fine grid --");
    for (i, &(n, b, e, z, delta)) in support::REGRESSION_CONFIGS.iter().enumerate() {
        let (eps, order) = support::epsilon(n, b, e, z, delta);
        println!(
            "config {i}: (n={n}, b={b}, e={e}, z={z}, delta={delta:e}) -> eps={eps:.12} at alpha={order}"
        );
    }
    println!("-- single-step values --");
    let v = support::rdp_single_step(1.1, 0.01, 16.0);
    println!("rdp_single_step(z=1.1, q=0.01, alpha=16) = {v:.15e}");
    let (eps, order) = {
        // z=1, q=0.01, T=1000, delta=1e-5 expressed as (n=100b, e so that T=1000)
        // q = b/n = 0.01 with n=100_000, b=1_000; steps = e * ceil(n/b) = e * 100
        // e=10 -> T=1000.
        support::epsilon(100_000, 1_000, 10, 1.0, 1e-5)
    };
    println!("epsilon(z=1, q=0.01, T=1000, delta=1e-5) = {eps:.12} at alpha={order}");
    println!("-- noise bisection --");
    let z = support::noise(10_000, 100, 10, 3.0, 1e-5);
    println!("noise(n=10000, b=100, e=10, eps=3, delta=1e-5) = {z:.6}");
}
