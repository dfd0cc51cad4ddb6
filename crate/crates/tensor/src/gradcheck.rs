//! Central finite-difference verification of analytic gradients.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A scalar function with an analytic gradient, evaluated in `f64`.
pub trait ScalarFunction {
    fn value(&mut self, x: &Tensor<f64>) -> Result<f64>;
    fn gradient(&mut self, x: &Tensor<f64>) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares the analytic gradient of `f` at `point` against central
/// differences with step `h` on every coordinate.
pub fn finite_difference_check(f: &mut impl ScalarFunction, point: &Tensor<f64>, h: f64) -> Result<GradCheckReport> {
    let all: Vec<usize> = (0..point.numel()).collect();
    finite_difference_check_at(f, point, h, &all)
}

/// As [`finite_difference_check`] restricted to `coordinates`.
pub fn finite_difference_check_at(
    f: &mut impl ScalarFunction,
    point: &Tensor<f64>,
    h: f64,
    coordinates: &[usize],
) -> Result<GradCheckReport> {
    let analytic = f.gradient(point)?;
    let mut probe = point.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for &i in coordinates {
        let original = probe.data()[i];
        probe.data_mut()[i] = original + h;
        let plus = f.value(&probe)?;
        probe.data_mut()[i] = original - h;
        let minus = f.value(&probe)?;
        probe.data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.checked == 1 {
            report = GradCheckReport {
                max_relative_error: err.max(report.max_relative_error),
                worst_index: i,
                analytic: analytic[i],
                numeric,
                checked: report.checked,
            };
        }
    }
    Ok(report)
}

/// Adapts a tape-building closure `x -> scalar` into a [`ScalarFunction`].
pub struct TapeFunction<F> {
    build: F,
}

impl<F> TapeFunction<F>
where
    F: FnMut(&mut Tape<f64>, Var) -> Result<Var>,
{
    pub fn new(build: F) -> Self {
        TapeFunction { build }
    }
}

impl<F> ScalarFunction for TapeFunction<F>
where
    F: FnMut(&mut Tape<f64>, Var) -> Result<Var>,
{
    fn value(&mut self, x: &Tensor<f64>) -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.input(x.clone())?;
        let out = (self.build)(&mut tape, v)?;
        Ok(tape.value(out).item())
    }

    fn gradient(&mut self, x: &Tensor<f64>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let v = tape.variable(x.clone())?;
        let out = (self.build)(&mut tape, v)?;
        let grads = tape.backward(out)?;
        Ok(grads.wrt(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; x.numel()]))
    }
}

/// Several tensors packed into one flat point; the closure receives one tape
/// variable per tensor.
pub struct PackedFunction<F> {
    shapes: Vec<Vec<usize>>,
    build: F,
}

impl<F> PackedFunction<F>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    pub fn new(shapes: Vec<Vec<usize>>, build: F) -> Self {
        PackedFunction { shapes, build }
    }

    pub fn pack(tensors: &[Tensor<f64>]) -> Tensor<f64> {
        let data: Vec<f64> = tensors.iter().flat_map(|t| t.data().iter().copied()).collect();
        let n = data.len();
        Tensor::new(vec![n], data).expect("non-empty pack")
    }

    fn unpack(&self, x: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        let mut offset = 0;
        self.shapes
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                let t = Tensor::new(s.clone(), x.data()[offset..offset + n].to_vec());
                offset += n;
                t
            })
            .collect()
    }

    fn run(&mut self, x: &Tensor<f64>, with_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let parts = self.unpack(x)?;
        let mut tape = Tape::new();
        let vars = parts
            .into_iter()
            .map(|t| if with_grad { tape.variable(t) } else { tape.input(t) })
            .collect::<Result<Vec<_>>>()?;
        let out = (self.build)(&mut tape, &vars)?;
        let value = tape.value(out).item();
        if !with_grad {
            return Ok((value, None));
        }
        let grads = tape.backward(out)?;
        let mut flat = Vec::with_capacity(x.numel());
        for (v, s) in vars.iter().zip(&self.shapes) {
            match grads.wrt(*v) {
                Some(g) => flat.extend_from_slice(g),
                None => flat.extend(std::iter::repeat_n(0.0, s.iter().product())),
            }
        }
        Ok((value, Some(flat)))
    }
}

impl<F> ScalarFunction for PackedFunction<F>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    fn value(&mut self, x: &Tensor<f64>) -> Result<f64> {
        Ok(self.run(x, false)?.0)
    }

    fn gradient(&mut self, x: &Tensor<f64>) -> Result<Vec<f64>> {
        Ok(self.run(x, true)?.1.expect("gradient requested"))
    }
}
