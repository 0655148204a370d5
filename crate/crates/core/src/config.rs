//! Pipeline configuration: one JSON document, every field optional.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::motion::BoundaryParams;
use crate::par::Execution;
use crate::proposals::ProposalParams;

/// Number of clusters per sub-sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterCount {
    Fixed(usize),
    /// Chosen per sub-sequence by the eigengap of a locally scaled affinity.
    Auto,
    /// One cluster per connected region of the sub-sequence's motion prior.
    /// Suited to scenes where every object moves: static objects add no region.
    Motion,
}

impl FromStr for ClusterCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ClusterCount::Auto),
            "motion" => Ok(ClusterCount::Motion),
            _ => s.parse().map(ClusterCount::Fixed).map_err(|_| {
                Error::param("k", format!("`{s}` is not a count, `auto` or `motion`"))
            }),
        }
    }
}

impl fmt::Display for ClusterCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterCount::Fixed(k) => write!(f, "{k}"),
            ClusterCount::Auto => f.write_str("auto"),
            ClusterCount::Motion => f.write_str("motion"),
        }
    }
}

impl Serialize for ClusterCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClusterCount::Fixed(k) => s.serialize_u64(*k as u64),
            ClusterCount::Auto => s.serialize_str("auto"),
            ClusterCount::Motion => s.serialize_str("motion"),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(usize),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(k) => Ok(ClusterCount::Fixed(k)),
            Repr::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Which classifier scores windows of new clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassifierSpec {
    /// Built-in colour-rule classifier.
    Oracle,
    /// Colour-rule classifier applied to every cluster of every sub-sequence.
    Always,
    /// External program speaking JSON lines on stdin/stdout.
    Command(PathBuf),
}

impl FromStr for ClassifierSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(ClassifierSpec::Oracle),
            "always" => Ok(ClassifierSpec::Always),
            _ => match s.strip_prefix("cmd:") {
                Some(p) if !p.is_empty() => Ok(ClassifierSpec::Command(PathBuf::from(p))),
                _ => Err(Error::param(
                    "classifier",
                    format!("`{s}`; expected `oracle`, `always` or `cmd:PATH`"),
                )),
            },
        }
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierSpec::Oracle => f.write_str("oracle"),
            ClassifierSpec::Always => f.write_str("always"),
            ClassifierSpec::Command(p) => write!(f, "cmd:{}", p.display()),
        }
    }
}

impl Serialize for ClassifierSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClassifierSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Weight of the temporal edge map, in `[0, 1]`.
    pub lambda: f64,
    /// Frames per sub-sequence, 3 to 5.
    pub subseq_len: usize,
    pub k: ClusterCount,
    /// Exponent on the joint density in the pointwise mutual information.
    pub rho: f64,
    /// Largest KL divergence at which a cluster keeps its previous id.
    pub tau_kl: f64,
    pub max_proposals: usize,
    /// NMS overlap for proposals.
    pub nms_beta: f64,
    /// NMS overlap between detections of one frame.
    pub detection_nms_beta: f64,
    pub classifier: ClassifierSpec,
    pub seed: u64,
    /// Frames are resized to `[width, height]` before processing; `null` keeps them.
    pub resize: Option<[usize; 2]>,
    /// Smallest max-pooled class score that labels a cluster.
    pub confidence_threshold: f64,
    pub min_box_area: u32,
    pub edge_threshold: f32,
    pub motion_magnitude_weight: f64,
    pub motion_direction_weight: f64,
    /// Motion-boundary level treated as a boundary by the inside-outside test.
    pub boundary_threshold: f32,
    /// Block-matching search radius when no flow is supplied.
    pub flow_radius: u32,
    pub flow_block: u32,
    /// Pair samples kept for the affinity density.
    pub max_pairs: usize,
    /// Prior level kept by segmentation masks.
    pub mask_threshold: f32,
    pub execution: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let motion = BoundaryParams::default();
        PipelineConfig {
            lambda: 0.3,
            subseq_len: 3,
            k: ClusterCount::Fixed(5),
            rho: 1.2,
            tau_kl: 2.0,
            max_proposals: 500,
            nms_beta: 0.9,
            detection_nms_beta: 0.5,
            classifier: ClassifierSpec::Oracle,
            seed: 0,
            resize: Some([500, 500]),
            confidence_threshold: 0.5,
            min_box_area: 1000,
            edge_threshold: crate::edges::DEFAULT_MAGNITUDE_THRESHOLD,
            motion_magnitude_weight: motion.alpha_magnitude,
            motion_direction_weight: motion.alpha_direction,
            boundary_threshold: motion.threshold,
            flow_radius: 4,
            flow_block: 7,
            max_pairs: 2048,
            mask_threshold: 0.5,
            execution: Execution::default(),
        }
    }
}

fn check(ok: bool, name: &'static str, reason: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::param(name, reason()))
    }
}

impl PipelineConfig {
    /// Settings for synthetic scenes of about 200 px: native resolution, one
    /// cluster per moving region, 50 proposals per frame of at least 400 px,
    /// and a KL threshold of 12.
    pub fn small_synthetic() -> Self {
        PipelineConfig {
            k: ClusterCount::Motion,
            tau_kl: 12.0,
            max_proposals: 50,
            resize: None,
            min_box_area: 400,
            ..PipelineConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check((0.0..=1.0).contains(&self.lambda), "lambda", || {
            format!("{} is outside [0, 1]", self.lambda)
        })?;
        check((3..=5).contains(&self.subseq_len), "subseq_len", || {
            format!("{} is outside [3, 5]", self.subseq_len)
        })?;
        if let ClusterCount::Fixed(k) = self.k {
            check(k >= 1, "k", || "must be at least 1".into())?;
        }
        check(self.rho.is_finite() && self.rho > 0.0, "rho", || {
            format!("{} must be positive", self.rho)
        })?;
        check(
            self.tau_kl.is_finite() && self.tau_kl > 0.0,
            "tau_kl",
            || format!("{} must be positive", self.tau_kl),
        )?;
        check(self.max_proposals >= 1, "max_proposals", || {
            "must be at least 1".into()
        })?;
        for (name, v) in [
            ("nms_beta", self.nms_beta),
            ("detection_nms_beta", self.detection_nms_beta),
        ] {
            check(v > 0.0 && v <= 1.0, name, || {
                format!("{v} is outside (0, 1]")
            })?;
        }
        check(
            (0.0..=1.0).contains(&self.confidence_threshold),
            "confidence_threshold",
            || format!("{} is outside [0, 1]", self.confidence_threshold),
        )?;
        if let Some([w, h]) = self.resize {
            check(w >= 16 && h >= 16, "resize", || {
                format!("{w}x{h} is below 16x16")
            })?;
        }
        check(
            (0.0..1.0).contains(&self.edge_threshold),
            "edge_threshold",
            || format!("{} is outside [0, 1)", self.edge_threshold),
        )?;
        check(
            self.motion_magnitude_weight >= 0.0 && self.motion_direction_weight >= 0.0,
            "motion_weights",
            || "must be non-negative".into(),
        )?;
        check(
            self.boundary_threshold > 0.0 && self.boundary_threshold < 1.0,
            "boundary_threshold",
            || format!("{} is outside (0, 1)", self.boundary_threshold),
        )?;
        check(self.flow_block >= 1, "flow_block", || {
            "must be at least 1".into()
        })?;
        check(self.max_pairs >= 2, "max_pairs", || {
            "must be at least 2".into()
        })?;
        check(
            self.mask_threshold > 0.0 && self.mask_threshold < 1.0,
            "mask_threshold",
            || format!("{} is outside (0, 1)", self.mask_threshold),
        )?;
        self.proposal_params().validate()
    }

    pub fn proposal_params(&self) -> ProposalParams {
        ProposalParams {
            max_proposals: self.max_proposals,
            nms_beta: self.nms_beta,
            min_box_area: self.min_box_area,
            magnitude_threshold: self.edge_threshold,
            ..ProposalParams::default()
        }
    }

    pub fn boundary_params(&self) -> BoundaryParams {
        BoundaryParams {
            alpha_magnitude: self.motion_magnitude_weight,
            alpha_direction: self.motion_direction_weight,
            threshold: self.boundary_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&s).unwrap(), c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"lambda": 0.8, "k": "auto", "classifier": "cmd:/bin/x"}"#)
                .unwrap();
        assert_eq!(c.lambda, 0.8);
        assert_eq!(c.k, ClusterCount::Auto);
        assert_eq!(c.classifier, ClassifierSpec::Command("/bin/x".into()));
        assert_eq!(c.subseq_len, 3);
        let c: PipelineConfig = serde_json::from_str(r#"{"k": 3, "resize": null}"#).unwrap();
        assert_eq!(c.k, ClusterCount::Fixed(3));
        assert_eq!(c.resize, None);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"lamda": 0.8}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"k": "many"}"#).is_err());
    }

    #[test]
    fn out_of_range_values_are_named() {
        type Edit = fn(&mut PipelineConfig);
        let cases: [(Edit, &str); 5] = [
            (|c| c.lambda = 1.5, "lambda"),
            (|c| c.subseq_len = 6, "subseq_len"),
            (|c| c.k = ClusterCount::Fixed(0), "k"),
            (|c| c.rho = 0.0, "rho"),
            (|c| c.nms_beta = 0.0, "nms_beta"),
        ];
        for (mutate, name) in cases {
            let mut c = PipelineConfig::default();
            mutate(&mut c);
            match c.validate() {
                Err(Error::InvalidParameter { name: n, .. }) => assert_eq!(n, name),
                other => panic!("{name}: {other:?}"),
            }
        }
    }

    #[test]
    fn spec_strings() {
        assert_eq!("auto".parse::<ClusterCount>().unwrap(), ClusterCount::Auto);
        assert_eq!("4".parse::<ClusterCount>().unwrap(), ClusterCount::Fixed(4));
        assert_eq!(
            "motion".parse::<ClusterCount>().unwrap(),
            ClusterCount::Motion
        );
        assert_eq!(ClusterCount::Motion.to_string(), "motion");
        assert!("x".parse::<ClusterCount>().is_err());
        assert_eq!(
            "always".parse::<ClassifierSpec>().unwrap(),
            ClassifierSpec::Always
        );
        assert!("cmd:".parse::<ClassifierSpec>().is_err());
        assert!("svm".parse::<ClassifierSpec>().is_err());
    }
}
