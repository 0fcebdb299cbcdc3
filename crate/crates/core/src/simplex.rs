//! Deterministic Nelder-Mead simplex minimizer.
//!
//! Used to polish the maximum-posterior sample into a stable chi-square
//! minimum before computing information criteria. Objective values of +inf
//! act as hard walls (points outside the prior support), which the simplex
//! contracts away from.

/// Minimizes `f` starting from `start`, with the initial simplex spanned by
/// `start + step[k] * e_k`. Returns the best vertex and its value.
pub fn nelder_mead<F>(f: F, start: &[f64], step: &[f64], max_iter: usize, ftol: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let d = start.len();
    assert!(d >= 1 && step.len() == d);

    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    vertices.push(start.to_vec());
    for k in 0..d {
        let mut v = start.to_vec();
        v[k] += if step[k] != 0.0 { step[k] } else { 1e-3 };
        vertices.push(v);
    }
    let mut values: Vec<f64> = vertices.iter().map(|v| f(v)).collect();

    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[d];
        let second_worst = order[d - 1];

        if converged(values[best], values[worst], ftol) {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; d];
        for &i in order.iter().take(d) {
            for k in 0..d {
                centroid[k] += vertices[i][k] / d as f64;
            }
        }

        let reflected: Vec<f64> = (0..d)
            .map(|k| centroid[k] + ALPHA * (centroid[k] - vertices[worst][k]))
            .collect();
        let f_reflected = f(&reflected);

        if f_reflected < values[best] {
            let expanded: Vec<f64> = (0..d)
                .map(|k| centroid[k] + GAMMA * (reflected[k] - centroid[k]))
                .collect();
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                vertices[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                vertices[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            vertices[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let contracted: Vec<f64> = (0..d)
                .map(|k| centroid[k] + RHO * (vertices[worst][k] - centroid[k]))
                .collect();
            let f_contracted = f(&contracted);
            if f_contracted < values[worst] {
                vertices[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                let anchor = vertices[best].clone();
                for &i in order.iter().skip(1) {
                    for (v, a) in vertices[i].iter_mut().zip(&anchor) {
                        *v = a + SIGMA * (*v - a);
                    }
                    values[i] = f(&vertices[i]);
                }
            }
        }
    }

    let best = (0..=d)
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    (vertices[best].clone(), values[best])
}

fn converged(f_best: f64, f_worst: f64, ftol: f64) -> bool {
    if !f_best.is_finite() || !f_worst.is_finite() {
        return false;
    }
    (f_worst - f_best).abs() <= ftol * (f_best.abs() + f_worst.abs() + 1e-300)
}
