use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GqaError, Result};

/// Elementary degradations every distortion type is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseKind {
    /// Zero-mean Gaussian offset per coordinate; parameter = standard deviation.
    Gaussian,
    /// Uniform offset in `[-h, h]` per coordinate; parameter = half range `h`.
    Uniform,
    /// +/- impulse on two disjoint 10% subsets; parameter = intensity.
    Impulse,
    /// One-sided exponential offset per coordinate; parameter = mean.
    Exponential,
    /// Cell-center quantization; parameter = cell edge.
    Octree,
    /// Random point removal; parameter = removed fraction (dimensionless).
    RandomDownsample,
    /// One survivor per grid cell; parameter = grid edge.
    GridDownsample,
}

/// Parameter values at the ten standard levels, in units of the reference edge
/// length (except the removed fraction of random downsampling).
const TABLE: [(BaseKind, [f64; 10]); 7] = [
    (BaseKind::Gaussian, [0.1, 0.167, 0.233, 0.3, 0.367, 0.433, 0.5, 0.567, 0.633, 0.7]),
    (BaseKind::Uniform, [0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9, 2.1]),
    (BaseKind::Impulse, [0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9, 2.1]),
    (BaseKind::Exponential, [0.1, 0.167, 0.233, 0.3, 0.367, 0.433, 0.5, 0.567, 0.633, 0.7]),
    (BaseKind::Octree, [0.01, 0.0117, 0.0133, 0.015, 0.0167, 0.0183, 0.02, 0.0217, 0.0233, 0.025]),
    (BaseKind::RandomDownsample, [0.15, 0.211, 0.272, 0.333, 0.394, 0.456, 0.517, 0.578, 0.639, 0.7]),
    (BaseKind::GridDownsample, [1.2, 1.34, 1.49, 1.63, 1.78, 1.92, 2.06, 2.21, 2.36, 2.5]),
];

pub const STANDARD_LEVELS: usize = 10;

impl BaseKind {
    pub fn param_name(self) -> &'static str {
        match self {
            BaseKind::Gaussian => "sigma",
            BaseKind::Uniform => "half_range",
            BaseKind::Impulse => "intensity",
            BaseKind::Exponential => "mean",
            BaseKind::Octree => "resolution",
            BaseKind::RandomDownsample => "fraction_removed",
            BaseKind::GridDownsample => "grid",
        }
    }

    /// Whether the parameter scales with the reference edge length.
    pub fn scales_with_edge(self) -> bool {
        self != BaseKind::RandomDownsample
    }

    fn table(self) -> &'static [f64; 10] {
        &TABLE.iter().find(|(k, _)| *k == self).expect("every kind tabulated").1
    }

    /// Level value in edge-length units (or the plain fraction for random downsampling).
    ///
    /// Ten-level schedules use the tabulated values; other level counts
    /// interpolate linearly between the same first and last values.
    pub fn relative_value(self, level: usize, levels: usize) -> Result<f64> {
        if levels == 0 || level == 0 || level > levels {
            return Err(GqaError::InvalidArgument(format!("level {level} outside 1..={levels}")));
        }
        let table = self.table();
        if levels == STANDARD_LEVELS {
            return Ok(table[level - 1]);
        }
        let (first, last) = (table[0], table[STANDARD_LEVELS - 1]);
        if levels == 1 {
            return Ok(first);
        }
        let t = (level - 1) as f64 / (levels - 1) as f64;
        Ok(first + (last - first) * t)
    }
}

/// One resolved elementary degradation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseParam {
    pub kind: BaseKind,
    pub value: f64,
}

impl BaseParam {
    pub fn resolve(kind: BaseKind, level: usize, levels: usize, edge_length: f64) -> Result<BaseParam> {
        let rel = kind.relative_value(level, levels)?;
        let value = if kind.scales_with_edge() { rel * edge_length } else { rel };
        Ok(BaseParam { kind, value })
    }
}

macro_rules! distortion_types {
    ($( $variant:ident => $tag:literal : [$($base:ident),*] ),* $(,)?) => {
        /// The distortion taxonomy: seven base types, six noise pairs, twelve
        /// compression+noise combinations, and the external-only structural type.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum DistortionType {
            $($variant,)*
            /// Structural distortion from an external scanner simulation; never generated here.
            Sd,
        }

        impl DistortionType {
            /// All types that can be generated, in canonical order.
            pub const GENERATABLE: [DistortionType; 25] = [$(DistortionType::$variant,)*];

            pub fn tag(self) -> &'static str {
                match self {
                    $(DistortionType::$variant => $tag,)*
                    DistortionType::Sd => "SD",
                }
            }

            /// Elementary degradations, in application order. Empty for SD.
            pub fn components(self) -> &'static [BaseKind] {
                match self {
                    $(DistortionType::$variant => &[$(BaseKind::$base),*],)*
                    DistortionType::Sd => &[],
                }
            }
        }
    };
}

distortion_types! {
    Gn => "GN": [Gaussian],
    Un => "UN": [Uniform],
    In => "IN": [Impulse],
    En => "EN": [Exponential],
    Oc => "OC": [Octree],
    Rd => "RD": [RandomDownsample],
    Gd => "GD": [GridDownsample],
    Gu => "GU": [Gaussian, Uniform],
    Gi => "GI": [Gaussian, Impulse],
    Ge => "GE": [Gaussian, Exponential],
    Ui => "UI": [Uniform, Impulse],
    Ue => "UE": [Uniform, Exponential],
    Ie => "IE": [Impulse, Exponential],
    Ocg => "OCG": [Octree, Gaussian],
    Ocu => "OCU": [Octree, Uniform],
    Oci => "OCI": [Octree, Impulse],
    Oce => "OCE": [Octree, Exponential],
    Rdg => "RDG": [RandomDownsample, Gaussian],
    Rdu => "RDU": [RandomDownsample, Uniform],
    Rdi => "RDI": [RandomDownsample, Impulse],
    Rde => "RDE": [RandomDownsample, Exponential],
    Gdg => "GDG": [GridDownsample, Gaussian],
    Gdu => "GDU": [GridDownsample, Uniform],
    Gdi => "GDI": [GridDownsample, Impulse],
    Gde => "GDE": [GridDownsample, Exponential],
}

impl DistortionType {
    pub fn is_generatable(self) -> bool {
        self != DistortionType::Sd
    }

    pub fn is_combo(self) -> bool {
        self.components().len() == 2
    }

    /// Parses a comma-separated list of tags, e.g. `"GN,RD"`.
    pub fn parse_list(s: &str) -> Result<Vec<DistortionType>> {
        s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
    }
}

impl fmt::Display for DistortionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DistortionType {
    type Err = GqaError;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.to_ascii_uppercase();
        if upper == "SD" {
            return Ok(DistortionType::Sd);
        }
        DistortionType::GENERATABLE
            .iter()
            .copied()
            .find(|d| d.tag() == upper)
            .ok_or_else(|| GqaError::UnknownDistortion(s.to_string()))
    }
}

impl Serialize for DistortionType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for DistortionType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Resolved parameters of `dtype` at `level` for a reference with average edge length `edge_length`.
pub fn level_param(dtype: DistortionType, level: usize, edge_length: f64, levels: usize) -> Result<Vec<BaseParam>> {
    if !dtype.is_generatable() {
        return Err(GqaError::ExternalOnlyDistortion(dtype.tag().into()));
    }
    if !(edge_length > 0.0) {
        return Err(GqaError::InvalidArgument(format!("edge length must be positive, got {edge_length}")));
    }
    dtype.components().iter().map(|&k| BaseParam::resolve(k, level, levels, edge_length)).collect()
}
