//! Multi-resolution hash grid encoding.
//!
//! Level `ℓ` lays a grid of resolution `N_ℓ` over the normalized cube; the
//! eight voxel corners around a query are hashed into a `T`-row feature
//! table and trilinearly blended. All levels share one parameter block of
//! shape `[L, T, F]`.

use rand::Rng;

use crate::autodiff::{BlockId, CustomOp, Matrix, ParamStore, Tape, Var};
use crate::error::Result;
use crate::field::config::HashGridConfig;

pub const HASH_BLOCK: &str = "hash.table";

const PRIMES: [u64; 3] = [1, 2_654_435_761, 805_459_861];

/// Table row of integer corner `c`, before the level offset.
pub fn hash_index(corner: [u64; 3], table_size: usize) -> usize {
    let h = corner[0].wrapping_mul(PRIMES[0]) ^ corner[1].wrapping_mul(PRIMES[1]) ^ corner[2].wrapping_mul(PRIMES[2]);
    (h % table_size as u64) as usize
}

pub fn register_hash_table(store: &mut ParamStore, cfg: &HashGridConfig, init_range: f64, rng: &mut impl Rng) -> Result<BlockId> {
    cfg.validate()?;
    let n = cfg.levels * cfg.table_size * cfg.features;
    let values = (0..n).map(|_| rng.gen_range(-init_range..=init_range)).collect();
    store.register(HASH_BLOCK, &[cfg.levels, cfg.table_size, cfg.features], values)
}

struct Lookup {
    /// Feature-row offsets into the table, `rows · L · 8`.
    offsets: Vec<usize>,
    /// Fractional voxel coordinates, `rows · L · 3`.
    frac: Vec<f64>,
    /// Per row and axis, true when the query was clamped.
    clamped: Vec<bool>,
    clamped_rows: u64,
}

fn lookup(points: &Matrix, cfg: &HashGridConfig) -> Lookup {
    let rows = points.rows;
    let l = cfg.levels;
    let mut offsets = Vec::with_capacity(rows * l * 8);
    let mut frac = Vec::with_capacity(rows * l * 3);
    let mut clamped = Vec::with_capacity(rows * 3);
    let mut clamped_rows = 0;
    let resolutions: Vec<usize> = (0..l).map(|lv| cfg.resolution(lv)).collect();
    for r in 0..rows {
        let p = points.row(r);
        let mut u = [0.0; 3];
        let mut any = false;
        for a in 0..3 {
            let c = p[a].clamp(-1.0, 1.0);
            // NaN is treated as out of range and pinned to the center
            let c = if c.is_nan() { 0.0 } else { c };
            let out = c != p[a];
            any |= out;
            clamped.push(out);
            u[a] = 0.5 * (c + 1.0);
        }
        clamped_rows += any as u64;
        for (lv, &res) in resolutions.iter().enumerate() {
            let mut base = [0u64; 3];
            for a in 0..3 {
                let pos = u[a] * res as f64;
                let b = (pos.floor() as usize).min(res - 1);
                base[a] = b as u64;
                frac.push(pos - b as f64);
            }
            let level_off = lv * cfg.table_size;
            for corner in 0..8u64 {
                let c = [base[0] + (corner & 1), base[1] + ((corner >> 1) & 1), base[2] + ((corner >> 2) & 1)];
                offsets.push((level_off + hash_index(c, cfg.table_size)) * cfg.features);
            }
        }
    }
    Lookup { offsets, frac, clamped, clamped_rows }
}

/// Trilinear weight of `corner` and its partial derivatives in the
/// fractional coordinates.
#[inline]
fn corner_weight(corner: usize, f: &[f64]) -> (f64, [f64; 3]) {
    let mut w = [0.0; 3];
    let mut dw = [0.0; 3];
    for a in 0..3 {
        if (corner >> a) & 1 == 1 {
            w[a] = f[a];
            dw[a] = 1.0;
        } else {
            w[a] = 1.0 - f[a];
            dw[a] = -1.0;
        }
    }
    (w[0] * w[1] * w[2], [dw[0] * w[1] * w[2], w[0] * dw[1] * w[2], w[0] * w[1] * dw[2]])
}

struct HashBackward {
    cfg: HashGridConfig,
    table: BlockId,
    lookup: Lookup,
}

impl CustomOp for HashBackward {
    fn backward(&self, out_grad: &Matrix, _input: &Matrix, input_grad: Option<&mut Matrix>, store: &mut ParamStore) {
        let (l, nf) = (self.cfg.levels, self.cfg.features);
        let rows = out_grad.rows;
        let lk = &self.lookup;
        {
            let grad = &mut store.block_mut(self.table).grad;
            for r in 0..rows {
                let g = out_grad.row(r);
                for lv in 0..l {
                    let f = &lk.frac[(r * l + lv) * 3..(r * l + lv) * 3 + 3];
                    let gl = &g[lv * nf..(lv + 1) * nf];
                    for corner in 0..8 {
                        let (w, _) = corner_weight(corner, f);
                        let off = lk.offsets[(r * l + lv) * 8 + corner];
                        for k in 0..nf {
                            grad[off + k] += w * gl[k];
                        }
                    }
                }
            }
        }
        if let Some(dx) = input_grad {
            let table = &store.block(self.table).value;
            for r in 0..rows {
                let g = out_grad.row(r);
                let mut acc = [0.0; 3];
                for lv in 0..l {
                    // d frac / d x = N_ℓ / 2
                    let scale = 0.5 * self.cfg.resolution(lv) as f64;
                    let f = &lk.frac[(r * l + lv) * 3..(r * l + lv) * 3 + 3];
                    let gl = &g[lv * nf..(lv + 1) * nf];
                    for corner in 0..8 {
                        let (_, dw) = corner_weight(corner, f);
                        let off = lk.offsets[(r * l + lv) * 8 + corner];
                        let dot: f64 = (0..nf).map(|k| gl[k] * table[off + k]).sum();
                        for a in 0..3 {
                            acc[a] += dot * dw[a] * scale;
                        }
                    }
                }
                let row = dx.row_mut(r);
                for a in 0..3 {
                    if !lk.clamped[r * 3 + a] {
                        row[a] += acc[a];
                    }
                }
            }
        }
    }
}

/// Encodes each row of `points` (an `n x 3` node in normalized
/// coordinates) into `L·F` features. Out-of-cube queries are clamped and
/// counted on the tape.
pub fn hash_encode(tape: &mut Tape, store: &ParamStore, points: Var, cfg: &HashGridConfig) -> Result<Var> {
    let table_id = store.id(HASH_BLOCK)?;
    let pts = tape.value(points);
    if pts.cols != 3 {
        return Err(crate::error::Error::Shape(format!("hash encoding expects 3 columns, got {}", pts.cols)));
    }
    let lk = lookup(pts, cfg);
    let (l, nf) = (cfg.levels, cfg.features);
    let rows = pts.rows;
    let table = &store.block(table_id).value;
    let mut out = Matrix::zeros(rows, l * nf);
    for r in 0..rows {
        let row = out.row_mut(r);
        for lv in 0..l {
            let f = &lk.frac[(r * l + lv) * 3..(r * l + lv) * 3 + 3];
            for corner in 0..8 {
                let (w, _) = corner_weight(corner, f);
                let off = lk.offsets[(r * l + lv) * 8 + corner];
                for k in 0..nf {
                    row[lv * nf + k] += w * table[off + k];
                }
            }
        }
    }
    tape.note_clamped(lk.clamped_rows);
    let op = HashBackward { cfg: cfg.clone(), table: table_id, lookup: lk };
    Ok(tape.custom(points, out, Box::new(op)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::relative_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_level(res: usize) -> HashGridConfig {
        HashGridConfig { levels: 1, table_size: 1 << 12, features: 2, base_resolution: res, growth: 1.5 }
    }

    fn store_for(cfg: &HashGridConfig, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        register_hash_table(&mut store, cfg, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        store
    }

    fn encode(store: &ParamStore, cfg: &HashGridConfig, p: [f64; 3]) -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_vec(1, 3, p.to_vec()).unwrap());
        let y = hash_encode(&mut tape, store, x, cfg).unwrap();
        tape.value(y).data.clone()
    }

    fn row(store: &ParamStore, cfg: &HashGridConfig, corner: [u64; 3]) -> Vec<f64> {
        let off = hash_index(corner, cfg.table_size) * cfg.features;
        store.get(HASH_BLOCK).unwrap().value[off..off + cfg.features].to_vec()
    }

    #[test]
    fn pinned_hash_value() {
        // (3·1 ⊕ 5·2654435761 ⊕ 7·805459861) mod 2¹⁴, evaluated independently
        assert_eq!(hash_index([3, 5, 7], 1 << 14), 1381);
        assert_eq!(hash_index([0, 0, 0], 1 << 14), 0);
    }

    #[test]
    fn resolution_schedule() {
        let cfg = HashGridConfig::default();
        let res: Vec<usize> = (0..8).map(|l| cfg.resolution(l)).collect();
        assert_eq!(res, vec![16, 24, 36, 54, 81, 121, 182, 273]);
    }

    #[test]
    fn vertex_query_returns_stored_row() {
        let cfg = single_level(16);
        let store = store_for(&cfg, 3);
        // vertex (4, 8, 12) of a 16-grid sits at x = 2·i/16 - 1
        let p = [2.0 * 4.0 / 16.0 - 1.0, 0.0, 2.0 * 12.0 / 16.0 - 1.0];
        let got = encode(&store, &cfg, p);
        let want = row(&store, &cfg, [4, 8, 12]);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn voxel_center_is_corner_mean() {
        let cfg = single_level(16);
        let store = store_for(&cfg, 5);
        let p = [2.0 * 3.5 / 16.0 - 1.0, 2.0 * 9.5 / 16.0 - 1.0, 2.0 * 0.5 / 16.0 - 1.0];
        let got = encode(&store, &cfg, p);
        let mut mean = [0.0; 2];
        for c in 0..8u64 {
            let r = row(&store, &cfg, [3 + (c & 1), 9 + ((c >> 1) & 1), (c >> 2) & 1]);
            mean[0] += r[0] / 8.0;
            mean[1] += r[1] / 8.0;
        }
        assert!((got[0] - mean[0]).abs() < 1e-12 && (got[1] - mean[1]).abs() < 1e-12);
    }

    #[test]
    fn out_of_cube_query_is_clamped_and_counted() {
        let cfg = single_level(16);
        let store = store_for(&cfg, 5);
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_vec(2, 3, vec![1.7, 0.0, 0.0, 0.2, 0.2, 0.2]).unwrap());
        let y = hash_encode(&mut tape, &store, x, &cfg).unwrap();
        assert_eq!(tape.clamped_queries(), 1);
        let edge = encode(&store, &cfg, [1.0, 0.0, 0.0]);
        assert_eq!(&tape.value(y).data[..2], &edge[..]);
    }

    fn loss_of(store: &ParamStore, cfg: &HashGridConfig, pts: &Matrix, weights: &[f64]) -> (Tape, Var, Var) {
        let mut tape = Tape::new();
        let x = tape.input(pts.clone());
        let y = hash_encode(&mut tape, store, x, cfg).unwrap();
        let w = tape.constant(Matrix::from_vec(pts.rows, cfg.output_width(), weights.to_vec()).unwrap());
        let p = tape.mul(y, w).unwrap();
        let sq = tape.square(p);
        let m = tape.mean(sq);
        (tape, m, x)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = HashGridConfig { levels: 3, table_size: 64, features: 2, base_resolution: 2, growth: 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = store_for(&cfg, 7);
        let pts = Matrix::from_vec(5, 3, (0..15).map(|_| rng.gen_range(-0.95..0.95)).collect()).unwrap();
        let weights: Vec<f64> = (0..5 * cfg.output_width()).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let (mut tape, m, x) = loss_of(&store, &cfg, &pts, &weights);
        tape.backward(m, &mut store).unwrap();
        let table_grad = store.get(HASH_BLOCK).unwrap().grad.clone();
        let x_grad = tape.grad(x).unwrap().data.clone();
        let eval = |s: &ParamStore, p: &Matrix| {
            let (t, m, _) = loss_of(s, &cfg, p, &weights);
            t.value(m).data[0]
        };
        let h = 1e-5;
        for i in 0..table_grad.len() {
            let orig = store.get(HASH_BLOCK).unwrap().value[i];
            store.get_mut(HASH_BLOCK).unwrap().value[i] = orig + h;
            let up = eval(&store, &pts);
            store.get_mut(HASH_BLOCK).unwrap().value[i] = orig - h;
            let down = eval(&store, &pts);
            store.get_mut(HASH_BLOCK).unwrap().value[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            assert!(relative_error(table_grad[i], numeric) < 1e-4, "row {i}: {} vs {numeric}", table_grad[i]);
        }
        for i in 0..15 {
            let mut p = pts.clone();
            p.data[i] += h;
            let up = eval(&store, &p);
            p.data[i] -= 2.0 * h;
            let down = eval(&store, &p);
            let numeric = (up - down) / (2.0 * h);
            assert!(relative_error(x_grad[i], numeric) < 1e-4, "x[{i}]: {} vs {numeric}", x_grad[i]);
        }
    }
}
