//! Records a small computation on the tape, runs the backward pass and
//! checks the gradients against finite differences.

use attrpat::autodiff::{grad_check, Tape, Tensor};

fn main() -> attrpat::Result<()> {
    let mut tape = Tape::new();
    let x = tape.variable(Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5])?);
    let w = tape.variable(Tensor::matrix(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6])?);
    let h = tape.matmul(x, w)?;
    let h = tape.tanh(h)?;
    let p = tape.masked_softmax(h, vec![true, false, true, true])?;
    let target = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0])?);
    let picked = tape.mul(p, target)?;
    let loss = tape.sum(picked)?;
    println!("probabilities {:?}", tape.value(p).data());
    println!("loss {:.6}", tape.value(loss).item());

    let grads = tape.backward(loss)?;
    println!("dL/dw {:?}", grads.get(w).map(Tensor::data));

    let point = [Tensor::matrix(2, 3, vec![0.3, -0.7, 1.1, 0.2, 0.9, -0.4])?];
    let report = grad_check(
        |t, v| {
            let s = t.log_softmax(v[0])?;
            let g = t.gelu(s)?;
            let l = t.layer_norm(g, 1e-12)?;
            let w = t.constant(Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.75])?);
            let l = t.mul(l, w)?;
            t.sum(l)
        },
        &point,
        1e-5,
        1e-5,
    )?;
    println!(
        "finite-difference check: {} (max relative error {:.2e})",
        if report.passed() { "ok" } else { "FAILED" },
        report.worst()
    );
    Ok(())
}
