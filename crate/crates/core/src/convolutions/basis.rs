use std::f64::consts::PI;

use num_complex::Complex64;

/// Which real component of a complex Morlet function a basis entry uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

/// One real basis function: a component of `k̃_{ℓ m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisFn {
    pub l: i32,
    pub m: i32,
    pub part: Part,
}

/// Hann-windowed Fourier functions on the disk of radius `cutoff` around the north pole.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBasis {
    cutoff: f64,
    functions: Vec<BasisFn>,
}

/// `k̃_{ℓm}(θ, φ) = h(θ') e^{iπℓθ' sin φ} e^{iπmθ' cos φ}` with `θ' = θ/cutoff`
/// and `h(θ') = cos²(πθ'/2)`; zero outside the open disk `θ' < 1`.
pub fn morlet_basis_eval(l: i32, m: i32, cutoff: f64, theta: f64, phi: f64) -> Complex64 {
    let t = theta / cutoff;
    if !(0.0..1.0).contains(&t) {
        return Complex64::new(0.0, 0.0);
    }
    let h = (0.5 * PI * t).cos().powi(2);
    let (s, c) = phi.sin_cos();
    Complex64::from_polar(h, PI * t * (l as f64 * s + m as f64 * c))
}

impl FilterBasis {
    pub fn new(cutoff: f64, functions: Vec<BasisFn>) -> Self {
        assert!(cutoff > 0.0, "cutoff must be positive");
        Self { cutoff, functions }
    }

    /// All `|ℓ|, |m| <= max_order` with real and imaginary parts as separate
    /// functions. Since `k̃_{-ℓ,-m} = conj(k̃_{ℓm})` only one half-plane is
    /// kept, giving `(2 max_order + 1)²` linearly independent functions.
    pub fn morlet(cutoff: f64, max_order: i32) -> Self {
        let mut functions = vec![BasisFn { l: 0, m: 0, part: Part::Re }];
        for l in 0..=max_order {
            for m in -max_order..=max_order {
                if l == 0 && m <= 0 {
                    continue;
                }
                functions.push(BasisFn { l, m, part: Part::Re });
                functions.push(BasisFn { l, m, part: Part::Im });
            }
        }
        Self { cutoff, functions }
    }

    /// The single isotropic window `h(θ')`.
    pub fn isotropic(cutoff: f64) -> Self {
        Self::new(cutoff, vec![BasisFn { l: 0, m: 0, part: Part::Re }])
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[BasisFn] {
        &self.functions
    }

    /// Real value of basis function `b` at filter-local coordinates.
    pub fn eval(&self, b: usize, theta: f64, phi: f64) -> f64 {
        let f = self.functions[b];
        let z = morlet_basis_eval(f.l, f.m, self.cutoff, theta, phi);
        match f.part {
            Part::Re => z.re,
            Part::Im => z.im,
        }
    }
}

/// Filter-local coordinates of the input point `(θ_in, φ_in)` seen from the
/// output point `(θ_out, φ_out)`: rotate the output point to the north pole
/// so that `φ = 0` points along the local southward meridian.
pub fn relative_coords(theta_out: f64, phi_out: f64, theta_in: f64, phi_in: f64) -> (f64, f64) {
    let (st, ct) = theta_in.sin_cos();
    let (sp, cp) = (phi_in - phi_out).sin_cos();
    let (x, y, z) = (st * cp, st * sp, ct);
    let (sb, cb) = theta_out.sin_cos();
    let xr = cb * x - sb * z;
    let zr = sb * x + cb * z;
    let rho = xr.hypot(y);
    (rho.atan2(zr), y.atan2(xr))
}
