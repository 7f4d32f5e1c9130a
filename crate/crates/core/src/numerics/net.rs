use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scalar::{norm, Real};

pub const MAX_NET_DIM: usize = 4;

/// Finite set of unit vectors such that every unit vector lies within `resolution` of one.
///
/// Dimensions 3 and 4 use a grid on each face of the cube `[-1, 1]^dim` pushed
/// radially onto the sphere; radial projection is 1-Lipschitz outside the unit
/// ball, so a face grid of spacing `2·resolution/√(dim−1)` suffices.
pub fn sphere_net<T: Real>(dim: usize, resolution: T) -> Result<Vec<Vec<T>>> {
    if dim > MAX_NET_DIM {
        return Err(Error::DimTooLarge { dim, max: MAX_NET_DIM });
    }
    if dim == 0 || !(resolution > T::zero() && resolution < T::one()) {
        return Err(Error::Precondition("sphere_net needs dim >= 1 and resolution in (0,1)".into()));
    }
    match dim {
        1 => Ok(vec![vec![T::one()], vec![-T::one()]]),
        2 => {
            let count = (T::PI() / resolution).ceil().to_usize().unwrap().max(3);
            let step = T::TAU() / T::count(count);
            Ok((0..count)
                .map(|k| {
                    let a = step * T::count(k);
                    vec![a.cos(), a.sin()]
                })
                .collect())
        }
        _ => Ok(cube_face_net(dim, resolution)),
    }
}

fn cube_face_net<T: Real>(dim: usize, resolution: T) -> Vec<Vec<T>> {
    let h = T::lit(2.0) * resolution / T::count(dim - 1).sqrt();
    let cells = (T::lit(2.0) / h).ceil().to_usize().unwrap().max(1);
    let ticks: Vec<T> = (0..=cells)
        .map(|j| -T::one() + T::lit(2.0) * T::count(j) / T::count(cells))
        .collect();
    let per_face = ticks.len().pow((dim - 1) as u32);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for face in 0..dim {
        for sign in [T::one(), -T::one()] {
            for flat in 0..per_face {
                let mut rest = flat;
                let mut ticks_used = Vec::with_capacity(dim);
                let mut p = Vec::with_capacity(dim);
                for axis in 0..dim {
                    if axis == face {
                        p.push(sign);
                        ticks_used.push(if sign > T::zero() { cells } else { 0 });
                    } else {
                        let j = rest % ticks.len();
                        rest /= ticks.len();
                        p.push(ticks[j]);
                        ticks_used.push(j);
                    }
                }
                // identical tick tuples are the same cube point, shared between faces
                if !seen.insert(ticks_used) {
                    continue;
                }
                let nrm = norm(&p);
                out.push(p.into_iter().map(|v| v / nrm).collect());
            }
        }
    }
    out
}
