//! Adaptive 7/15-point Gauss–Kronrod quadrature.

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights for the odd-indexed Kronrod nodes.
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 50;

/// Kronrod estimate and `|Kronrod − Gauss|` on `[a, b]`.
fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = half * KRONROD_NODES[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += KRONROD_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, error) = gauss_kronrod(f, a, b);
    if error <= tol || depth >= MAX_DEPTH || b - a <= f64::EPSILON * a.abs().max(b.abs()) {
        return value;
    }
    let mid = 0.5 * (a + b);
    adapt(f, a, mid, 0.5 * tol, depth + 1) + adapt(f, mid, b, 0.5 * tol, depth + 1)
}

/// `∫_a^b f`, bisecting until each piece's Gauss–Kronrod error estimate is
/// within its share of `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    adapt(&f, a, b, abs_tol, 0)
}
