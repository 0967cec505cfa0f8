/// Exact `(E(C_S), E(|S|/m))` for the selection-bias scenario: `m`
/// families of `n` independent uniform nulls, a family is selected when
/// its smallest p-value is below `q`, and each selected family is tested
/// by Bonferroni at `q` with `C = 1{V >= 1}`.
///
/// Every family with a false rejection is selected, so
/// `E(C_S) = m * P(V_i > 0) * E[1 / (Y + 1)]` with
/// `Y ~ Bin(m - 1, s)` and `s = 1 - (1 - q)^n`, which simplifies to
/// `(1 - (1 - q/n)^n) * (1 - (1 - q)^(nm)) / (1 - (1 - q)^n)`.
pub fn closed_form_example1(q: f64, m: usize, n: usize) -> (f64, f64) {
    let nf = n as f64;
    // 1 - (1 - x)^k without cancellation.
    let one_minus_pow = |x: f64, k: f64| -(k * (-x).ln_1p()).exp_m1();
    let any_false = one_minus_pow(q / nf, nf);
    let selected = one_minus_pow(q, nf);
    let e_cs = any_false * one_minus_pow(q, nf * m as f64) / selected;
    (e_cs, selected)
}
