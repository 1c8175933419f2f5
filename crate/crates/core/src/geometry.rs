//! Gaze direction geometry.
//!
//! Angles follow the camera-frame convention used throughout the crate:
//! `pitch` is positive when looking up, `yaw` is positive toward the test
//! taker's right, and `(0, 0)` means looking straight into the camera. The
//! camera axis `+z` points from the test taker toward the camera.
//!
//! The gaze plot uses an orthographic projection: a unit direction
//! `(x, y, z)` maps to the plot point `(x, y)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the Euclidean norm of a [`GazeVector`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// Predicted gaze angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeAngles {
    pub pitch: f64,
    pub yaw: f64,
}

impl GazeAngles {
    pub fn new(pitch: f64, yaw: f64) -> Result<Self> {
        let angles = Self { pitch, yaw };
        angles.validate()?;
        Ok(angles)
    }

    /// Checks `|pitch| <= pi/2` and `|yaw| <= pi`.
    pub fn validate(&self) -> Result<()> {
        if !self.pitch.is_finite() || self.pitch.abs() > FRAC_PI_2 {
            return Err(Error::domain(format!(
                "pitch {} outside [-pi/2, pi/2]",
                self.pitch
            )));
        }
        if !self.yaw.is_finite() || self.yaw.abs() > PI {
            return Err(Error::domain(format!("yaw {} outside [-pi, pi]", self.yaw)));
        }
        Ok(())
    }
}

/// A 3D unit direction in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct GazeVector {
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    x: f64,
    y: f64,
    z: f64,
}

impl TryFrom<RawVector> for GazeVector {
    type Error = Error;

    fn try_from(raw: RawVector) -> Result<Self> {
        GazeVector::new(raw.x, raw.y, raw.z)
    }
}

impl From<GazeVector> for RawVector {
    fn from(v: GazeVector) -> Self {
        RawVector {
            x: v.x,
            y: v.y,
            z: v.z,
        }
    }
}

impl GazeVector {
    /// The camera axis, i.e. looking straight at the camera.
    pub const CAMERA: GazeVector = GazeVector {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    /// Builds a vector that must already have unit norm.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::domain(format!(
                "vector ({x}, {y}, {z}) has norm {norm}, expected 1"
            )));
        }
        Ok(Self { x, y, z })
    }

    /// Scales a non-zero vector to unit length.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::domain("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn dot(&self, other: &GazeVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Inverse of [`angles_to_unit_vector`]: `pitch = asin(y)`, `yaw = atan2(x, z)`.
    pub fn to_angles(&self) -> GazeAngles {
        GazeAngles {
            pitch: self.y.clamp(-1.0, 1.0).asin(),
            yaw: self.x.atan2(self.z),
        }
    }

    /// Two unit vectors spanning the plane perpendicular to `self`.
    ///
    /// The first is `self x e` where `e` is the world axis least aligned with
    /// `self`; the second completes a right-handed frame.
    pub fn perpendicular_basis(&self) -> (GazeVector, GazeVector) {
        let (ax, ay, az) = (self.x.abs(), self.y.abs(), self.z.abs());
        let e = if ax <= ay && ax <= az {
            (1.0, 0.0, 0.0)
        } else if ay <= az {
            (0.0, 1.0, 0.0)
        } else {
            (0.0, 0.0, 1.0)
        };
        let (x, y, z) = cross((self.x, self.y, self.z), e);
        let n = (x * x + y * y + z * z).sqrt();
        let first = (x / n, y / n, z / n);
        let second = cross((self.x, self.y, self.z), first);
        (
            GazeVector {
                x: first.0,
                y: first.1,
                z: first.2,
            },
            GazeVector {
                x: second.0,
                y: second.1,
                z: second.2,
            },
        )
    }

    /// Tilts `self` by `angle` radians toward the perpendicular direction at
    /// `azimuth` (measured in [`Self::perpendicular_basis`]).
    ///
    /// Equivalent to a rotation by `angle` about the axis perpendicular to both
    /// `self` and the chosen tilt direction, so the angular distance between
    /// input and output is `angle` for `angle` in `[0, pi]`.
    pub fn tilted(&self, azimuth: f64, angle: f64) -> GazeVector {
        let (e1, e2) = self.perpendicular_basis();
        let (sa, ca) = azimuth.sin_cos();
        let dir = (
            ca * e1.x + sa * e2.x,
            ca * e1.y + sa * e2.y,
            ca * e1.z + sa * e2.z,
        );
        let (s, c) = angle.sin_cos();
        let x = c * self.x + s * dir.0;
        let y = c * self.y + s * dir.1;
        let z = c * self.z + s * dir.2;
        let n = (x * x + y * y + z * z).sqrt();
        GazeVector {
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }
}

fn cross(a: (f64, f64, f64), b: (f64, f64, f64)) -> (f64, f64, f64) {
    (
        a.1 * b.2 - a.2 * b.1,
        a.2 * b.0 - a.0 * b.2,
        a.0 * b.1 - a.1 * b.0,
    )
}

/// A point on the 2D gaze plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub u: f64,
    pub v: f64,
}

/// `(cos(pitch) sin(yaw), sin(pitch), cos(pitch) cos(yaw))`.
pub fn angles_to_unit_vector(angles: GazeAngles) -> Result<GazeVector> {
    angles.validate()?;
    let (sp, cp) = angles.pitch.sin_cos();
    let (sy, cy) = angles.yaw.sin_cos();
    Ok(GazeVector {
        x: cp * sy,
        y: sp,
        z: cp * cy,
    })
}

/// Orthographic projection: drops the camera-axis component.
pub fn project_to_plane(v: GazeVector) -> PlanePoint {
    PlanePoint { u: v.x, v: v.y }
}

/// Great-circle angle between two unit vectors, in `[0, pi]`.
pub fn angular_distance(a: GazeVector, b: GazeVector) -> f64 {
    a.dot(&b).clamp(-1.0, 1.0).acos()
}

/// `true` (positive, looking away) iff the prediction is strictly more than
/// `theta` radians from the screen reference.
pub fn classify_frame(pred: GazeVector, screen_ref: GazeVector, theta: f64) -> bool {
    angular_distance(pred, screen_ref) > theta
}
