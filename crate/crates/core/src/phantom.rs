//! Synthetic source regions.

use crate::error::{Error, Result};
use crate::field::SourceField;
use crate::mesh::{Point2, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    SingleDisk,
    TwoDisks,
    Taichi,
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::SingleDisk => "single_disk",
            PhantomKind::TwoDisks => "two_disks",
            PhantomKind::Taichi => "taichi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "single_disk" => Ok(PhantomKind::SingleDisk),
            "two_disks" => Ok(PhantomKind::TwoDisks),
            "taichi" => Ok(PhantomKind::Taichi),
            other => Err(Error::Config(format!(
                "unknown phantom '{other}' (expected single_disk, two_disks or taichi)"
            ))),
        }
    }
}

/// A source region built from disks. For [`PhantomKind::Taichi`] the first
/// center and radius describe the enclosing disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub kind: PhantomKind,
    pub centers: Vec<Point2>,
    pub radii: Vec<f64>,
    pub amplitude: f64,
}

impl Phantom {
    pub fn new(
        kind: PhantomKind,
        centers: Vec<Point2>,
        radii: Vec<f64>,
        amplitude: f64,
    ) -> Result<Self> {
        let expected = match kind {
            PhantomKind::SingleDisk | PhantomKind::Taichi => 1,
            PhantomKind::TwoDisks => 2,
        };
        if centers.len() != expected || radii.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "{} phantom needs {expected} center(s) and radius(es), got {} and {}",
                kind.name(),
                centers.len(),
                radii.len()
            )));
        }
        if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument(
                "phantom radii must be positive".into(),
            ));
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidArgument(
                "phantom amplitude must be finite".into(),
            ));
        }
        Ok(Phantom {
            kind,
            centers,
            radii,
            amplitude,
        })
    }

    /// Default geometry of each kind with unit amplitude.
    pub fn default_of(kind: PhantomKind) -> Self {
        let (centers, radii) = match kind {
            PhantomKind::SingleDisk => (vec![Point2::new(0.1, 0.1)], vec![0.45]),
            PhantomKind::TwoDisks => (
                vec![Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0)],
                vec![0.25, 0.25],
            ),
            PhantomKind::Taichi => (vec![Point2::new(0.0, 0.0)], vec![0.5]),
        };
        Phantom::new(kind, centers, radii, 1.0).expect("default phantom is valid")
    }

    /// Largest distance from the origin reached by the region.
    pub fn extent(&self) -> f64 {
        self.centers
            .iter()
            .zip(&self.radii)
            .map(|(c, r)| c.norm() + r)
            .fold(0.0, f64::max)
    }

    /// Fails unless the region stays at least `0.05 * domain_radius` away
    /// from the boundary of the disk of radius `domain_radius`.
    pub fn check_inside(&self, domain_radius: f64) -> Result<()> {
        let limit = 0.95 * domain_radius;
        if self.extent() > limit {
            return Err(Error::Domain(format!(
                "phantom reaches radius {:.4}, beyond the allowed {:.4}",
                self.extent(),
                limit
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point2) -> bool {
        let in_disk = |c: Point2, r: f64| p.dist(c) <= r;
        match self.kind {
            PhantomKind::SingleDisk | PhantomKind::TwoDisks => self
                .centers
                .iter()
                .zip(&self.radii)
                .any(|(c, r)| in_disk(*c, *r)),
            PhantomKind::Taichi => {
                let c = self.centers[0];
                let r = self.radii[0];
                if !in_disk(c, r) {
                    return false;
                }
                let upper = Point2::new(c.x, c.y + r / 2.0);
                let lower = Point2::new(c.x, c.y - r / 2.0);
                let dark = ((p.x < c.x) || in_disk(upper, r / 2.0)) && !in_disk(lower, r / 2.0);
                (dark || in_disk(lower, r / 8.0)) && !in_disk(upper, r / 8.0)
            }
        }
    }
}

/// Nodal indicator of the phantom scaled by its amplitude.
pub fn rasterize_phantom(phantom: &Phantom, mesh: &TriMesh) -> Result<SourceField> {
    phantom.check_inside(mesh.radius())?;
    Ok(SourceField::new(
        mesh.nodes()
            .iter()
            .map(|&p| {
                if phantom.contains(p) {
                    phantom.amplitude
                } else {
                    0.0
                }
            })
            .collect(),
    ))
}
