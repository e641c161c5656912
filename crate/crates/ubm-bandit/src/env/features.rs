//! Session logs → attractiveness matrix → low-rank per-(user, item) features.
//!
//! The pipeline mirrors how production logs become bandit features: clicks
//! are first debiased into a user × item attractiveness matrix (each entry
//! is the examination-corrected click rate), the matrix is factorized by a
//! seeded randomized truncated SVD, and the concatenation `[U(i), V(j)]`
//! of a user row and an item row becomes the feature vector for that pair.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::click::SessionRecord;
use crate::error::{Error, Result};
use crate::model::{ArmId, Context, PositionWeights};
use crate::policy::last_click_positions;
use crate::rng;

/// Magic prefix of the dense-matrix binary format.
const MATRIX_MAGIC: &[u8; 8] = b"UBMDMAT1";

/// Examination-corrected click rates per (user, item), clamped to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AttractivenessMatrix {
    users: Vec<String>,
    arms: Vec<ArmId>,
    matrix: DMatrix<f64>,
    clamped: usize,
}

impl AttractivenessMatrix {
    /// Users in ascending name order; row `i` of the matrix belongs to
    /// `users()[i]`.
    pub fn users(&self) -> &[String] {
        &self.users
    }

    /// Arms in ascending id order; column `j` belongs to `arms()[j]`.
    pub fn arms(&self) -> &[ArmId] {
        &self.arms
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// How many entries the [0, 1] clamp actually changed.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn user_index(&self, user: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.as_str().cmp(user)).ok()
    }

    pub fn arm_index(&self, arm: ArmId) -> Option<usize> {
        self.arms.binary_search(&arm).ok()
    }
}

/// Estimates each user's attractiveness for each item: logged clicks
/// divided by the examination mass the log gave the pair,
/// `M(i,j) = (clicks(i,j)/|D(i)|) / ⟨W̃, π(j|i)⟩`, where `π(j|i)` is the
/// empirical slot distribution of item `j` within user `i`'s records.
/// Pairs that never co-occur get 0; estimates above 1 are clamped and
/// counted.
pub fn build_attractiveness_matrix(
    sessions: &[SessionRecord],
    weights: &PositionWeights,
) -> Result<AttractivenessMatrix> {
    if sessions.is_empty() {
        return Err(Error::invalid("cannot estimate attractiveness from an empty log"));
    }
    let tilde = weights.tilde();
    let mut users: Vec<&str> = sessions.iter().map(SessionRecord::user).collect();
    users.sort_unstable();
    users.dedup();
    let mut arms: Vec<ArmId> = sessions.iter().flat_map(|s| s.displayed().iter().copied()).collect();
    arms.sort_unstable();
    arms.dedup();
    let user_index = |u: &str| users.binary_search(&u).expect("user collected above");
    let arm_index = |a: ArmId| arms.binary_search(&a).expect("arm collected above");

    // Per (user, arm): slot counts and click count; per user: record count.
    let mut slot_counts = vec![vec![0.0f64; tilde.len()]; users.len() * arms.len()];
    let mut clicks = vec![0.0f64; users.len() * arms.len()];
    let mut records = vec![0.0f64; users.len()];
    for s in sessions {
        if s.len() > weights.k() {
            return Err(Error::invalid(format!(
                "logged list of length {} exceeds the weight table's {} positions",
                s.len(),
                weights.k()
            )));
        }
        let ui = user_index(s.user());
        records[ui] += 1.0;
        let kps = last_click_positions(s.clicks());
        for (pos, (&arm, &clicked)) in s.displayed().iter().zip(s.clicks()).enumerate() {
            let cell = ui * arms.len() + arm_index(arm);
            let slot = weights.slot_index(pos + 1, kps[pos])?;
            slot_counts[cell][slot] += 1.0;
            if clicked {
                clicks[cell] += 1.0;
            }
        }
    }

    let mut clamped = 0usize;
    let matrix = DMatrix::from_fn(users.len(), arms.len(), |i, j| {
        let cell = i * arms.len() + j;
        let w_dot: f64 = slot_counts[cell]
            .iter()
            .zip(&tilde)
            .map(|(c, w)| c / records[i] * w)
            .sum();
        if w_dot <= 0.0 {
            return 0.0;
        }
        let raw = clicks[cell] / records[i] / w_dot;
        if raw > 1.0 {
            clamped += 1;
            1.0
        } else {
            raw
        }
    });
    Ok(AttractivenessMatrix {
        users: users.into_iter().map(String::from).collect(),
        arms,
        matrix,
        clamped,
    })
}

/// A truncated SVD `M ≈ U·diag(S)·Vᵀ` with orthonormal factor columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFactorization {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    s: DVector<f64>,
}

impl FeatureFactorization {
    /// Assembles a factorization, checking shape agreement and that both
    /// factors have orthonormal columns (within 1e−6).
    pub fn from_parts(u: DMatrix<f64>, v: DMatrix<f64>, s: DVector<f64>) -> Result<Self> {
        let rank = s.len();
        if rank == 0 {
            return Err(Error::invalid("a factorization needs rank at least 1"));
        }
        if u.ncols() != rank || v.ncols() != rank {
            return Err(Error::DimensionMismatch {
                expected: rank,
                got: if u.ncols() != rank { u.ncols() } else { v.ncols() },
            });
        }
        for (name, f) in [("user", &u), ("item", &v)] {
            let gram = f.transpose() * f;
            let defect = (&gram - DMatrix::identity(rank, rank)).abs().max();
            if defect > 1e-6 {
                return Err(Error::invalid(format!(
                    "{name} factor columns are not orthonormal (defect {defect:.2e})"
                )));
            }
        }
        Ok(Self { u, v, s })
    }

    /// User factor, one row per user.
    pub fn user_factors(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Item factor, one row per item.
    pub fn item_factors(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// The low-rank reconstruction `U·diag(S)·Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * self.v.transpose()
    }
}

/// Randomized truncated SVD: a gaussian sketch finds the dominant range,
/// `power_iterations` rounds of `M Mᵀ` multiplication (re-orthonormalized
/// each half-step) sharpen it, and a dense SVD of the small projected
/// matrix yields the factors. Deterministic in `seed`.
pub fn truncated_svd(
    matrix: &DMatrix<f64>,
    rank: usize,
    oversampling: usize,
    power_iterations: usize,
    seed: u64,
) -> Result<FeatureFactorization> {
    let min_dim = matrix.nrows().min(matrix.ncols());
    if rank == 0 {
        return Err(Error::invalid("rank must be at least 1"));
    }
    if rank > min_dim {
        return Err(Error::invalid(format!(
            "rank {rank} exceeds min(rows, cols) = {min_dim}"
        )));
    }
    let sketch = (rank + oversampling).min(min_dim);
    let mut rng = rng::substream(seed, "svd", 0);
    let omega =
        DMatrix::from_fn(matrix.ncols(), sketch, |_, _| rng::standard_normal(&mut rng));
    let mut q = (matrix * omega).qr().q();
    for _ in 0..power_iterations {
        let z = (matrix.transpose() * &q).qr().q();
        q = (matrix * z).qr().q();
    }
    let small = q.transpose() * matrix;
    let svd = small.svd(true, true);
    let u_small = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let u = (&q * u_small.columns(0, rank)).into_owned();
    let v = v_t.rows(0, rank).transpose().into_owned();
    let s = DVector::from_iterator(rank, svd.singular_values.iter().take(rank).copied());
    FeatureFactorization::from_parts(u, v, s)
}

/// The feature vector of a (user, item) pair: the user's row of `U`
/// concatenated with the item's row of `V`, scaled into the unit ball.
pub fn make_context(user: usize, item: usize, fact: &FeatureFactorization) -> Result<Context> {
    if user >= fact.user_factors().nrows() {
        return Err(Error::invalid(format!(
            "user index {user} out of range for {} users",
            fact.user_factors().nrows()
        )));
    }
    if item >= fact.item_factors().nrows() {
        return Err(Error::invalid(format!(
            "item index {item} out of range for {} items",
            fact.item_factors().nrows()
        )));
    }
    let mut values = Vec::with_capacity(2 * fact.rank());
    values.extend(fact.user_factors().row(user).iter());
    values.extend(fact.item_factors().row(item).iter());
    Context::new(values)
}

/// Writes one dense matrix: an 8-byte magic, row and column counts as
/// little-endian u32, then row-major little-endian f64 values.
pub fn write_matrix_into<W: Write>(matrix: &DMatrix<f64>, out: &mut W) -> Result<()> {
    let rows = u32::try_from(matrix.nrows())
        .map_err(|_| Error::invalid("matrix has too many rows for the file format"))?;
    let cols = u32::try_from(matrix.ncols())
        .map_err(|_| Error::invalid("matrix has too many columns for the file format"))?;
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&rows.to_le_bytes())?;
    out.write_all(&cols.to_le_bytes())?;
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            out.write_all(&matrix[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads one dense matrix written by [`write_matrix_into`].
pub fn read_matrix_from<R: Read>(input: &mut R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Parse("not a dense-matrix file (bad magic)".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let rows = u32::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let cols = u32::from_le_bytes(word) as usize;
    let mut values = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 8];
    for _ in 0..rows * cols {
        input.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Writes one matrix to a file.
pub fn write_matrix(path: impl AsRef<Path>, matrix: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_matrix_into(matrix, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Reads one matrix from a file.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_matrix_from(&mut BufReader::new(File::open(path)?))
}

/// Writes a factorization as three consecutive matrix records: `U`, `V`,
/// and the singular values as a single-row matrix.
pub fn write_factorization(path: impl AsRef<Path>, fact: &FeatureFactorization) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_matrix_into(fact.user_factors(), &mut out)?;
    write_matrix_into(fact.item_factors(), &mut out)?;
    write_matrix_into(&DMatrix::from_rows(&[fact.singular_values().transpose()]), &mut out)?;
    out.flush()?;
    Ok(())
}

/// Reads a factorization written by [`write_factorization`], re-validating
/// its invariants.
pub fn read_factorization(path: impl AsRef<Path>) -> Result<FeatureFactorization> {
    let mut input = BufReader::new(File::open(path)?);
    let u = read_matrix_from(&mut input)?;
    let v = read_matrix_from(&mut input)?;
    let s = read_matrix_from(&mut input)?;
    if s.nrows() != 1 {
        return Err(Error::Parse(format!(
            "singular-value block must be one row, found {}",
            s.nrows()
        )));
    }
    FeatureFactorization::from_parts(u, v, s.row(0).transpose())
}
