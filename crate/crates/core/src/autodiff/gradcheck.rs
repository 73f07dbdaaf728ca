use super::{Graph, Rng, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-7)`.
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compare backward gradients of `build` with central differences of step `h`.
///
/// Non-scalar outputs are contracted with fixed pseudo-random weights first.
/// `sample` limits the check to that many randomly chosen input entries.
pub fn gradcheck<F>(
    build: F,
    inputs: &[Tensor],
    h: f64,
    sample: Option<(usize, &mut Rng)>,
) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let weights = |n: usize| {
        let mut r = Rng::new(0x0516_C4EC);
        Tensor::from_fn(&[n], |_| r.range(0.5, 1.5))
    };
    let eval = |g: &mut Graph, ins: &[Tensor], leaves: bool| -> Result<(Vec<Var>, Var)> {
        let vars = ins
            .iter()
            .map(|t| {
                if leaves {
                    g.leaf(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let out = build(g, &vars)?;
        let n = g.value(out).len();
        let flat = g.reshape(out, &[n])?;
        let w = g.constant(weights(n))?;
        let p = g.mul(flat, w)?;
        Ok((vars, g.sum(p)?))
    };
    let mut g = Graph::new();
    let (vars, loss) = eval(&mut g, inputs, true)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            g.grad(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();
    drop(g);

    let mut entries: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
        .collect();
    if let Some((k, rng)) = sample {
        let pick = rng.choose(entries.len(), k);
        entries = pick.into_iter().map(|i| entries[i]).collect();
    }
    if entries.is_empty() {
        return Err(Error::InvalidArgument("gradcheck over no entries".into()));
    }
    let mut worst: f64 = 0.0;
    for &(i, j) in &entries {
        let probe = |delta: f64| -> Result<f64> {
            let mut ins = inputs.to_vec();
            ins[i].data_mut()[j] += delta;
            let mut g = Graph::new();
            let (_, l) = eval(&mut g, &ins, false)?;
            g.value(l).item()
        };
        let numeric = (probe(h)? - probe(-h)?) / (2.0 * h);
        let a = analytic[i][j];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    Ok(GradcheckReport {
        max_rel_error: worst,
        checked: entries.len(),
    })
}
