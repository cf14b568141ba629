use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::image::{SpinImage, SPIN_COLS, SPIN_DIMS, SPIN_ROWS};
use crate::error::{Error, Result};
use crate::io::write_text;

/// Number of eigenvectors kept in a codebook.
pub const CODEBOOK_SIZE: usize = 30;
/// Side of the square patch used by the patch codebook.
pub const PATCH_SIZE: usize = 11;
pub const PATCH_DIMS: usize = PATCH_SIZE * PATCH_SIZE;
/// Training sets must be larger than the basis.
pub const MIN_TRAINING_IMAGES: usize = CODEBOOK_SIZE + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CodebookKind {
    /// PCA over 11 x 11 zero-padded patches centered on every pixel.
    Patch11,
    /// PCA over whole vectorized spin images.
    #[default]
    WholeImage,
}

impl CodebookKind {
    pub fn dims(self) -> usize {
        match self {
            CodebookKind::Patch11 => PATCH_DIMS,
            CodebookKind::WholeImage => SPIN_DIMS,
        }
    }
}

impl fmt::Display for CodebookKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodebookKind::Patch11 => "patch-11x11",
            CodebookKind::WholeImage => "whole-image",
        })
    }
}

impl FromStr for CodebookKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patch-11x11" | "patch" => Ok(CodebookKind::Patch11),
            "whole-image" | "whole" => Ok(CodebookKind::WholeImage),
            _ => Err(Error::InvalidConfig(format!("unknown codebook kind `{s}`"))),
        }
    }
}

/// PCA basis: the mean sample and the leading eigenvectors of the sample
/// covariance as orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub kind: CodebookKind,
    pub mean: DVector<f64>,
    /// `dims x count`, columns sorted by decreasing eigenvalue.
    pub basis: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Sum of the eigenvalues that were dropped.
    pub residual_variance: f64,
}

/// Projection coefficients of one spin image.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCode {
    pub coeffs: Vec<f64>,
}

impl Codebook {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.basis.ncols()
    }

    /// PCA on the rows of `samples` (one sample per row), keeping
    /// `components` eigenvectors. Uses the population covariance.
    pub fn fit(kind: CodebookKind, samples: &DMatrix<f64>, components: usize) -> Result<Self> {
        let (n, dims) = samples.shape();
        if n == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if components > dims {
            return Err(Error::DimensionMismatch {
                expected: components,
                got: dims,
            });
        }
        let mean = DVector::from_iterator(dims, samples.column_iter().map(|c| c.sum() / n as f64));
        let mut cov = DMatrix::<f64>::zeros(dims, dims);
        const CHUNK: usize = 4096;
        let mut start = 0;
        while start < n {
            let rows = CHUNK.min(n - start);
            let mut block = samples.rows(start, rows).into_owned();
            for mut row in block.row_iter_mut() {
                row -= mean.transpose();
            }
            cov += block.tr_mul(&block);
            start += rows;
        }
        cov /= n as f64;
        // symmetrize away rounding before the eigensolver
        let cov = (&cov + cov.transpose()) * 0.5;

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dims).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let mut basis = DMatrix::zeros(dims, components);
        let mut eigenvalues = Vec::with_capacity(components);
        for (j, &k) in order.iter().take(components).enumerate() {
            let mut v = eig.eigenvectors.column(k).into_owned();
            // sign convention: largest-magnitude entry positive
            if v[v.iamax()] < 0.0 {
                v = -v;
            }
            basis.set_column(j, &v);
            eigenvalues.push(eig.eigenvalues[k].max(0.0));
        }
        let residual_variance = order[components..]
            .iter()
            .map(|&k| eig.eigenvalues[k].max(0.0))
            .sum();
        Ok(Self {
            kind,
            mean,
            basis,
            eigenvalues,
            residual_variance,
        })
    }

    /// `basis^T (x - mean)`.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: x.len(),
            });
        }
        Ok(self.basis.tr_mul(&(x - &self.mean)))
    }

    /// `mean + basis * coeffs`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<DVector<f64>> {
        if coeffs.len() != self.count() {
            return Err(Error::DimensionMismatch {
                expected: self.count(),
                got: coeffs.len(),
            });
        }
        Ok(&self.mean + &self.basis * DVector::from_column_slice(coeffs))
    }

    /// Writes the codebook as CSV: a `kind,dims,count` header and its values,
    /// then the mean row, one row per eigenvector, and the kept eigenvalues.
    pub fn to_csv(&self) -> String {
        let join = |it: &mut dyn Iterator<Item = f64>| {
            it.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        };
        let mut out = format!("kind,dims,count\n{},{},{}\n", self.kind, self.dims(), self.count());
        out.push_str(&format!("mean,{}\n", join(&mut self.mean.iter().copied())));
        for (j, col) in self.basis.column_iter().enumerate() {
            out.push_str(&format!("v{},{}\n", j, join(&mut col.iter().copied())));
        }
        out.push_str(&format!(
            "eigenvalues,{},{}\n",
            join(&mut self.eigenvalues.iter().copied()),
            self.residual_variance
        ));
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, token: &str, message: &str| Error::Parse {
            line,
            token: token.to_string(),
            message: message.to_string(),
        };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first().map(|l| l.trim()) != Some("kind,dims,count") {
            return Err(bad(1, lines.first().unwrap_or(&""), "expected `kind,dims,count` header"));
        }
        let header: Vec<&str> = lines.get(1).unwrap_or(&"").split(',').collect();
        if header.len() != 3 {
            return Err(bad(2, lines.get(1).unwrap_or(&""), "expected kind,dims,count values"));
        }
        let kind: CodebookKind = header[0].parse()?;
        let dims: usize = header[1].parse().map_err(|_| bad(2, header[1], "bad dims"))?;
        let count: usize = header[2].parse().map_err(|_| bad(2, header[2], "bad count"))?;

        let row = |idx: usize, label: &str, len: usize| -> Result<Vec<f64>> {
            let line = lines.get(idx).ok_or_else(|| bad(idx + 1, "", "missing row"))?;
            let mut fields = line.split(',');
            let name = fields.next().unwrap_or("");
            if !name.starts_with(label) {
                return Err(bad(idx + 1, name, &format!("expected `{label}` row")));
            }
            let values = fields
                .map(|f| f.trim().parse::<f64>().map_err(|_| bad(idx + 1, f, "not a number")))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != len {
                return Err(bad(idx + 1, name, &format!("expected {len} values, found {}", values.len())));
            }
            Ok(values)
        };
        let mean = DVector::from_vec(row(2, "mean", dims)?);
        let mut basis = DMatrix::zeros(dims, count);
        for j in 0..count {
            basis.set_column(j, &DVector::from_vec(row(3 + j, "v", dims)?));
        }
        let mut ev = row(3 + count, "eigenvalues", count + 1)?;
        let residual_variance = ev.pop().unwrap_or(0.0);
        Ok(Self {
            kind,
            mean,
            basis,
            eigenvalues: ev,
            residual_variance,
        })
    }
}

/// Every `11 x 11` patch (zero padded at the borders) centered on a pixel of
/// the image, as rows of a `496 x 121` matrix.
pub fn image_patches(img: &SpinImage) -> DMatrix<f64> {
    let half = (PATCH_SIZE / 2) as isize;
    let mut out = DMatrix::zeros(SPIN_DIMS, PATCH_DIMS);
    for r in 0..SPIN_ROWS {
        for c in 0..SPIN_COLS {
            let row = r * SPIN_COLS + c;
            for dr in -half..=half {
                for dc in -half..=half {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr >= SPIN_ROWS as isize || cc >= SPIN_COLS as isize {
                        continue;
                    }
                    let col = ((dr + half) as usize) * PATCH_SIZE + (dc + half) as usize;
                    out[(row, col)] = img.get(rr as usize, cc as usize);
                }
            }
        }
    }
    out
}

/// Trains a 30-vector PCA codebook from spin images.
pub fn train_codebook(images: &[SpinImage], kind: CodebookKind) -> Result<Codebook> {
    if images.len() < MIN_TRAINING_IMAGES {
        return Err(Error::InsufficientData {
            needed: MIN_TRAINING_IMAGES,
            got: images.len(),
        });
    }
    let samples = match kind {
        CodebookKind::WholeImage => {
            DMatrix::from_fn(images.len(), SPIN_DIMS, |i, j| images[i].grid()[j])
        }
        CodebookKind::Patch11 => {
            let mut all = DMatrix::zeros(images.len() * SPIN_DIMS, PATCH_DIMS);
            for (i, img) in images.iter().enumerate() {
                all.rows_mut(i * SPIN_DIMS, SPIN_DIMS).copy_from(&image_patches(img));
            }
            all
        }
    };
    Codebook::fit(kind, &samples, CODEBOOK_SIZE)
}

/// Projection coefficients of a spin image on the codebook. Patch codebooks
/// project every pixel's patch and average the coefficient vectors.
pub fn encode(img: &SpinImage, cb: &Codebook) -> Result<PointCode> {
    if cb.dims() != cb.kind.dims() {
        return Err(Error::DimensionMismatch {
            expected: cb.kind.dims(),
            got: cb.dims(),
        });
    }
    let coeffs = match cb.kind {
        CodebookKind::WholeImage => cb.project(&DVector::from_column_slice(img.grid()))?,
        CodebookKind::Patch11 => {
            let patches = image_patches(img);
            let mean_patch = DVector::from_iterator(
                PATCH_DIMS,
                patches.column_iter().map(|c| c.sum() / SPIN_DIMS as f64),
            );
            // the projection is affine, so pooling after projecting equals
            // projecting the pooled patch
            cb.project(&mean_patch)?
        }
    };
    Ok(PointCode {
        coeffs: coeffs.iter().copied().collect(),
    })
}
