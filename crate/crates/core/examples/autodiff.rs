//! Builds a tiny graph on the tape, runs backward and cross-checks the
//! gradient against central differences.

use xmodal::tensor::{grad_check, Tape, Tensor};

fn main() -> xmodal::Result<()> {
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?;
    let w = Tensor::new(vec![3, 2], vec![1.0, 0.5, -0.25, 2.0, 0.75, -1.5])?;

    let tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let wv = tape.constant(w.clone());
    let loss = xv.matmul(&wv)?.sigmoid().softmax(1)?.log()?.mean();
    println!("loss = {:.6}", loss.item().unwrap());
    tape.backward(loss)?;
    println!("d loss / d x = {:?}", xv.grad().unwrap().data());

    let err = grad_check(
        |t, x| {
            let w = t.constant(w.clone());
            Ok(x.matmul(&w)?.sigmoid().softmax(1)?.log()?.mean())
        },
        &x,
        1e-6,
    )?;
    println!("max relative error vs finite differences: {err:.2e}");
    Ok(())
}
