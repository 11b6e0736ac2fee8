//! Fixtures shared by the benchmarks.

use ergolab::ergodic::ErgodicExperiment;
use ergolab::{BoxDomain, EquationInstance, ExponentPair, OperatorSpec, ScalarField, SymMatrix, UniformGrid};

/// Trace-operator instance on `[−1, 1]` with `b ≡ 1`.
pub fn interval_instance(alpha: f64, beta: f64, f: f64) -> EquationInstance {
    EquationInstance::new(
        OperatorSpec::trace(1.0).unwrap(),
        ExponentPair::new(alpha, beta).unwrap(),
        ScalarField::constant(1.0),
        ScalarField::constant(f),
        BoxDomain::interval(-1.0, 1.0).unwrap(),
    )
    .unwrap()
}

/// Pucci maximal operator on the unit square.
pub fn square_instance(f: f64) -> EquationInstance {
    EquationInstance::new(
        OperatorSpec::pucci_plus(1.0, 2.0).unwrap(),
        ExponentPair::new(0.0, 1.5).unwrap(),
        ScalarField::constant(1.0),
        ScalarField::constant(f),
        BoxDomain::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap(),
    )
    .unwrap()
}

pub fn grid(inst: &EquationInstance, h: f64) -> UniformGrid {
    UniformGrid::with_spacing(&inst.domain, h).unwrap()
}

/// Ergodic experiment for `−u'' + |u'|^β = c` on `[−1, 1]` at spacing `h`.
pub fn ergodic_experiment(beta: f64, h: f64) -> ErgodicExperiment {
    let inst = interval_instance(0.0, beta, 0.0);
    let g = grid(&inst, h);
    ErgodicExperiment::new(inst, g, vec![10.0, 15.0, 20.0]).unwrap()
}

/// A fixed indefinite 3×3 matrix.
pub fn sample_matrix() -> SymMatrix {
    SymMatrix::from_rows(&[vec![1.0, 0.3, -0.2], vec![0.3, -2.0, 0.5], vec![-0.2, 0.5, 0.7]]).unwrap()
}
