//! Exact Euclidean distance transform with nearest-seed indices
//! (two-pass parabola-envelope algorithm).

/// For every pixel of a `width`×`height` grid, the Euclidean distance to the
/// nearest seed pixel and that seed's linear index (`y*width + x`). Seeds
/// get distance 0 and themselves. `seeds` must contain at least one `true`.
pub fn distance_transform(
    seeds: &[bool],
    width: usize,
    height: usize,
) -> (Vec<f64>, Vec<usize>) {
    assert_eq!(seeds.len(), width * height);
    const BIG: f64 = 1e20;

    // Pass 1, per column: squared distance to the nearest seed in the same
    // column, and that seed's row.
    let mut col_d = vec![BIG; width * height];
    let mut col_row = vec![usize::MAX; width * height];
    for x in 0..width {
        let mut last: Option<usize> = None;
        for y in 0..height {
            if seeds[y * width + x] {
                last = Some(y);
            }
            if let Some(sy) = last {
                let d = (y - sy) as f64;
                col_d[y * width + x] = d * d;
                col_row[y * width + x] = sy;
            }
        }
        last = None;
        for y in (0..height).rev() {
            if seeds[y * width + x] {
                last = Some(y);
            }
            if let Some(sy) = last {
                let d = (sy - y) as f64;
                let dd = d * d;
                if dd < col_d[y * width + x] {
                    col_d[y * width + x] = dd;
                    col_row[y * width + x] = sy;
                }
            }
        }
    }

    // Pass 2, per row: lower envelope of the parabolas (x - i)^2 + col_d[i].
    let mut dist = vec![0.0; width * height];
    let mut index = vec![0usize; width * height];
    let mut v = vec![0usize; width];
    let mut z = vec![0.0f64; width + 1];
    for y in 0..height {
        let row = &col_d[y * width..(y + 1) * width];
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in 1..width {
            let fq = row[q] + (q * q) as f64;
            loop {
                let p = v[k];
                let s = (fq - (row[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                if s <= z[k] {
                    if k == 0 {
                        // q's parabola dominates from the start.
                        v[0] = q;
                        z[1] = f64::INFINITY;
                        break;
                    }
                    k -= 1;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        let mut k = 0usize;
        for q in 0..width {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let src = v[k];
            let dq = q as f64 - src as f64;
            dist[y * width + q] = (dq * dq + row[src]).sqrt();
            index[y * width + q] = col_row[y * width + src] * width + src;
        }
    }
    (dist, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute_force(seeds: &[bool], width: usize, height: usize) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; width * height];
        for y in 0..height {
            for x in 0..width {
                for sy in 0..height {
                    for sx in 0..width {
                        if seeds[sy * width + sx] {
                            let d = ((y as f64 - sy as f64).powi(2)
                                + (x as f64 - sx as f64).powi(2))
                            .sqrt();
                            if d < out[y * width + x] {
                                out[y * width + x] = d;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let width = rng.gen_range(1..14);
            let height = rng.gen_range(1..14);
            let mut seeds: Vec<bool> = (0..width * height).map(|_| rng.gen_bool(0.2)).collect();
            if !seeds.iter().any(|&s| s) {
                seeds[rng.gen_range(0..width * height)] = true;
            }
            let (dist, index) = distance_transform(&seeds, width, height);
            let expect = brute_force(&seeds, width, height);
            for i in 0..width * height {
                assert!(
                    (dist[i] - expect[i]).abs() < 1e-9,
                    "trial {trial} pixel {i}: got {} want {}",
                    dist[i],
                    expect[i]
                );
                // The reported seed must be a seed at exactly that distance.
                let (sy, sx) = (index[i] / width, index[i] % width);
                assert!(seeds[index[i]], "index points at a non-seed");
                let (y, x) = (i / width, i % width);
                let d = ((y as f64 - sy as f64).powi(2) + (x as f64 - sx as f64).powi(2)).sqrt();
                assert!((d - dist[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seeds_map_to_themselves() {
        let seeds = vec![false, true, false, false, false, true];
        let (dist, index) = distance_transform(&seeds, 3, 2);
        assert_eq!(dist[1], 0.0);
        assert_eq!(index[1], 1);
        assert_eq!(dist[5], 0.0);
        assert_eq!(index[5], 5);
    }
}
