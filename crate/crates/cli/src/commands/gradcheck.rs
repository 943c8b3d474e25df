use sporal_core::matrix::Matrix;
use sporal_core::network::{gradient_check_scaled, init_params, Dims};
use sporal_core::rng::RngStream;
use sporal_core::{Error, Result};

pub struct GradcheckArgs {
    pub channels: usize,
    pub hidden: usize,
    pub classes: usize,
    pub layers: usize,
    pub window: usize,
    pub lanes: usize,
    pub seed: u64,
    pub eps: f64,
    /// Scales the recurrent-weight gradients by 1.01 to prove the checker
    /// catches broken gradients.
    pub corrupt: bool,
}

pub const PASS_THRESHOLD: f64 = 1e-4;

/// Build the random instance for a given seed: uniform inputs, random
/// targets, all steps unmasked.
pub fn instance(
    dims: Dims,
    window: usize,
    lanes: usize,
    seed: u64,
) -> (Vec<Matrix>, Vec<Vec<usize>>, Vec<Vec<bool>>) {
    let mut rng = RngStream::named(seed, "gradcheck");
    let x = (0..window)
        .map(|_| Matrix::from_fn(lanes, dims.input, |_, _| rng.uniform(-1.0, 1.0).unwrap()))
        .collect();
    let targets = (0..window)
        .map(|_| (0..lanes).map(|_| rng.index(dims.classes).unwrap()).collect())
        .collect();
    let mask = vec![vec![true; lanes]; window];
    (x, targets, mask)
}

/// Run the finite-difference check and report pass/fail; the error path
/// carries the training category so the exit code is 4.
pub fn run(args: &GradcheckArgs) -> Result<()> {
    let dims = Dims::new(args.channels, args.hidden, args.classes, args.layers);
    let net = init_params(dims, args.seed);
    let (x, targets, mask) = instance(dims, args.window, args.lanes, args.seed);
    let scale = if args.corrupt { 1.01 } else { 1.0 };
    let err = gradient_check_scaled(&net, &x, &targets, &mask, args.eps, scale)?;
    let pass = err <= PASS_THRESHOLD;
    println!(
        "max relative error {err:.3e} (threshold {PASS_THRESHOLD:.0e}) -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(Error::Training(format!(
            "gradient check failed: {err:.3e} > {PASS_THRESHOLD:.0e}"
        )))
    }
}
