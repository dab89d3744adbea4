//! A tour of the reverse-mode tape: tracked leaves, a composite expression,
//! gradient extraction, and a central-difference cross-check of the analytic
//! gradient on a small two-layer network.
//!
//! Run with `cargo run --release --example autodiff_basics`.

use avae::tensor::check::{max_rel_err, numeric_gradient};
use avae::tensor::{sample_standard_normal, StreamKind, StreamRng};
use avae::{Result, Tape, Tensor};

fn main() -> Result<()> {
    // Scalars first: d/dx of x^2 + 3x at x = 2 is 7.
    let tape = Tape::new();
    let x = tape.var(Tensor::scalar(2.0));
    let y = x.mul(&x)?.add(&x.scale(3.0))?;
    let grads = y.backward()?;
    println!("d(x^2 + 3x)/dx at x=2: {}", grads.wrt(&x).unwrap().item());

    // A two-layer network with a logistic loss. `var` marks leaves whose
    // gradients we want; `input` marks constants the tape will not track.
    let mut rng = StreamRng::new(42).stream(StreamKind::Synthetic, 0);
    let xs = sample_standard_normal(&[8, 5], &mut rng);
    let w1 = sample_standard_normal(&[5, 6], &mut rng);
    let w2 = sample_standard_normal(&[6, 1], &mut rng);

    let loss_at = |w1t: &Tensor, w2t: &Tensor| -> Result<(Tape, f64)> {
        let tape = Tape::new();
        let x = tape.input(xs.clone());
        let a = tape.var(w1t.clone());
        let b = tape.var(w2t.clone());
        let h = x.matmul(&a)?.relu();
        let p = h.matmul(&b)?.sigmoid();
        // Pull every prediction toward 1: loss = -mean ln p.
        let loss = p.clamp(1e-7, 1.0 - 1e-7)?.log()?.mean_all().neg();
        let v = loss.item();
        Ok((tape, v))
    };

    // Analytic gradients for both weight matrices in one backward pass.
    let tape = Tape::new();
    let x = tape.input(xs.clone());
    let a = tape.var(w1.clone());
    let b = tape.var(w2.clone());
    let loss = x
        .matmul(&a)?
        .relu()
        .matmul(&b)?
        .sigmoid()
        .clamp(1e-7, 1.0 - 1e-7)?
        .log()?
        .mean_all()
        .neg();
    println!("loss: {:.6}", loss.item());
    let grads = loss.backward()?;
    let ga = grads.wrt(&a).unwrap().clone();
    let gb = grads.wrt(&b).unwrap().clone();

    // Central differences as an independent oracle.
    let na = numeric_gradient(&mut |t| loss_at(t, &w2).map(|(_, v)| v), &w1, 1e-5)?;
    let nb = numeric_gradient(&mut |t| loss_at(&w1, t).map(|(_, v)| v), &w2, 1e-5)?;
    println!("max rel err, layer 1: {:.2e}", max_rel_err(&ga, &na));
    println!("max rel err, layer 2: {:.2e}", max_rel_err(&gb, &nb));
    Ok(())
}
