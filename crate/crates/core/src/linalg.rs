//! Dense linear-algebra helpers not covered directly by `nalgebra`.

/// Orthonormal basis of a set of columns built by modified Gram–Schmidt with
/// re-orthogonalization. A column whose remaining norm falls below
/// `REL_TOL` of its original norm is linearly dependent on earlier columns and
/// is dropped, so the lowest-index member of a collinear set is the one kept.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    q: Vec<Vec<f64>>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

const REL_TOL: f64 = 1e-9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_out(v: &mut [f64], q: &[Vec<f64>]) {
    for _ in 0..2 {
        for basis in q {
            let c = dot(v, basis);
            for (vi, bi) in v.iter_mut().zip(basis) {
                *vi -= c * bi;
            }
        }
    }
}

impl OrthoBasis {
    pub fn build(columns: &[Vec<f64>]) -> Self {
        let mut q: Vec<Vec<f64>> = Vec::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for (j, col) in columns.iter().enumerate() {
            let norm0 = dot(col, col).sqrt();
            let mut v = col.clone();
            project_out(&mut v, &q);
            let norm = dot(&v, &v).sqrt();
            if norm0 == 0.0 || norm <= REL_TOL * norm0 {
                dropped.push(j);
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
            kept.push(j);
        }
        Self { q, kept, dropped }
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    /// `y` minus its orthogonal projection onto the span of the basis.
    pub fn residual(&self, y: &[f64]) -> Vec<f64> {
        let mut r = y.to_vec();
        project_out(&mut r, &self.q);
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_collinear_later_column() {
        let a = vec![1.0, 1.0, 1.0, 1.0];
        let b = vec![1.0, 2.0, 3.0, 4.0];
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - y).collect();
        let basis = OrthoBasis::build(&[a, b.clone(), c]);
        assert_eq!(basis.kept, vec![0, 1]);
        assert_eq!(basis.dropped, vec![2]);
        let r = basis.residual(&b);
        assert!(r.iter().all(|x| x.abs() < 1e-12));
    }
}
