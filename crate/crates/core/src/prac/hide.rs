//! Hiding `x` as well as `A`: split the workers into two groups, run one
//! private instance on `x + u` and one on `u` for a fresh uniform `u`, and
//! subtract.

use rand::Rng;

use crate::error::{domain, Result};
use crate::gf256::FieldMatrix;

/// Size and collusion bound of one worker group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupSpec {
    pub n: usize,
    pub z: usize,
}

/// Something that can compute `a * v` privately on one group of workers.
pub trait GroupRunner {
    /// `group` is 0 for the group that sees `x + u` and 1 for the group that
    /// sees `u`.
    fn run(&mut self, group: usize, spec: GroupSpec, a: &FieldMatrix, v: &[u8]) -> Result<Vec<u8>>;
}

/// Returns `A x` computed as `A (x + u) - A u`.
pub fn hide_x_run<R: Rng + ?Sized>(
    a: &FieldMatrix,
    x: &[u8],
    groups: [GroupSpec; 2],
    runner: &mut impl GroupRunner,
    rng: &mut R,
) -> Result<FieldMatrix> {
    if x.len() != a.cols() {
        return Err(domain(format!("x has {} entries, A has {} columns", x.len(), a.cols())));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.z == 0 || g.n <= g.z {
            return Err(domain(format!(
                "group {} needs 0 < z < n, got n={}, z={}",
                i + 1,
                g.n,
                g.z
            )));
        }
    }
    let mut u = vec![0u8; x.len()];
    rng.fill(&mut u[..]);
    let masked: Vec<u8> = x.iter().zip(&u).map(|(a, b)| a ^ b).collect();

    let first = runner.run(0, groups[0], a, &masked)?;
    let second = runner.run(1, groups[1], a, &u)?;
    if first.len() != a.rows() || second.len() != a.rows() {
        return Err(domain("group result has the wrong length"));
    }
    Ok(FieldMatrix::column(
        first.iter().zip(&second).map(|(p, q)| p ^ q).collect(),
    ))
}
