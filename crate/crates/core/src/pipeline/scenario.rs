//! Synthetic scenarios with a known answer.
//!
//! Each class owns an object made of disjoint rectangular parts. A part is
//! "discriminative against" a set of comparison classes: the pair dump for
//! (class, comparison) is built so that its Grad-CAM lights up exactly the
//! parts that list that comparison. Probability logs are drawn so that
//! classes in the same confusion group absorb most of each other's mass.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cam::{write_pair_dump, LayerDump, PairDump};
use crate::similarity::{write_probability_log, ProbabilityRecord};
use crate::tensorio::{write_mask_pgm, BinaryMask, Tensor};
use crate::{Error, Result};

use super::config::{PathsConfig, PipelineConfig};

/// Half-open pixel rectangle `[y0, y1) x [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.y0 < o.y1 && o.y0 < self.y1 && self.x0 < o.x1 && o.x0 < self.x1
    }

    fn contains(&self, y: usize, x: usize) -> bool {
        (self.y0..self.y1).contains(&y) && (self.x0..self.x1).contains(&x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub rect: Rect,
    /// Comparison classes whose pair map highlights this part.
    pub against: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub parts: Vec<PartSpec>,
}

impl ObjectSpec {
    fn bounds(&self) -> Rect {
        let mut b = self.parts[0].rect;
        for p in &self.parts[1..] {
            b.y0 = b.y0.min(p.rect.y0);
            b.x0 = b.x0.min(p.rect.x0);
            b.y1 = b.y1.max(p.rect.y1);
            b.x1 = b.x1.max(p.rect.x1);
        }
        b
    }

    pub fn area(&self) -> usize {
        self.parts.iter().map(|p| p.rect.area()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScenario {
    pub class_names: Vec<String>,
    pub height: usize,
    pub width: usize,
    pub images_per_class: usize,
    /// Tapped layers per pair dump.
    pub layers: usize,
    /// Confusion groups; must partition the classes.
    pub groups: Vec<Vec<usize>>,
    /// One object per class, in class order.
    pub objects: Vec<ObjectSpec>,
    /// Probability mass an image keeps on its own class.
    pub self_mass: f64,
    /// Mass spread over the rest of its confusion group.
    pub group_mass: f64,
    /// Largest per-image translation of the object, in pixels.
    pub max_shift: usize,
}

/// Everything a scenario produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub records: Vec<ProbabilityRecord>,
    pub dumps: Vec<PairDump>,
    /// `(image_id, class, mask)`
    pub masks: Vec<(String, usize, BinaryMask)>,
}

impl SyntheticScenario {
    /// `groups` confusion groups of `group_size` classes on a square image.
    ///
    /// Each object is a horizontal band split into one vertical strip per
    /// group; strip `j` is discriminative against every other class of group
    /// `j`. Any selection taking one class per group therefore covers the
    /// whole object, while each single pair covers one strip.
    pub fn complementary(groups: usize, group_size: usize, size: usize) -> Self {
        let n = groups * group_size;
        let strip = (size.saturating_sub(4) / groups).max(1);
        let band = (size / 2).max(1);
        let y0 = (size - band) / 2;
        let x0 = (size - strip * groups) / 2;
        let group_of = |c: usize| c / group_size;
        let objects = (0..n)
            .map(|class| ObjectSpec {
                parts: (0..groups)
                    .map(|g| PartSpec {
                        rect: Rect {
                            y0,
                            x0: x0 + g * strip,
                            y1: y0 + band,
                            x1: x0 + (g + 1) * strip,
                        },
                        against: (0..n).filter(|&c| c != class && group_of(c) == g).collect(),
                    })
                    .collect(),
            })
            .collect();
        SyntheticScenario {
            class_names: (0..n).map(|i| format!("class{i:02}")).collect(),
            height: size,
            width: size,
            images_per_class: 2,
            layers: 3,
            groups: (0..groups)
                .map(|g| (g * group_size..(g + 1) * group_size).collect())
                .collect(),
            objects,
            self_mass: 0.5,
            group_mass: 0.4,
            max_shift: 2,
        }
    }

    pub fn n(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        let n = self.n();
        if n < 2 {
            return bad("need at least two classes".into());
        }
        if self.height == 0 || self.width == 0 || self.layers == 0 || self.images_per_class == 0 {
            return bad("height, width, layers and images_per_class must be positive".into());
        }
        if self.objects.len() != n {
            return bad(format!("{} objects for {n} classes", self.objects.len()));
        }
        if !(self.self_mass >= 0.0 && self.group_mass >= 0.0 && self.self_mass + self.group_mass <= 1.0) {
            return bad("self_mass + group_mass must lie in [0, 1]".into());
        }
        let mut seen = BTreeSet::new();
        for g in &self.groups {
            for &c in g {
                if c >= n || !seen.insert(c) {
                    return bad(format!("group member {c} invalid or repeated"));
                }
            }
        }
        if seen.len() != n {
            return bad("groups must cover every class".into());
        }
        for (class, obj) in self.objects.iter().enumerate() {
            if obj.parts.is_empty() {
                return bad(format!("class {class}: object has no parts"));
            }
            for (i, p) in obj.parts.iter().enumerate() {
                let r = p.rect;
                if r.y0 >= r.y1 || r.x0 >= r.x1 || r.y1 > self.height || r.x1 > self.width {
                    return bad(format!("class {class} part {i}: rectangle {r:?} empty or out of bounds"));
                }
                if let Some(&c) = p.against.iter().find(|&&c| c >= n || c == class) {
                    return bad(format!("class {class} part {i}: invalid comparison class {c}"));
                }
                for (j, q) in obj.parts[..i].iter().enumerate() {
                    if r.overlaps(&q.rect) {
                        return bad(format!("class {class}: parts {j} and {i} overlap"));
                    }
                }
            }
        }
        Ok(())
    }

    fn group_of(&self, class: usize) -> &[usize] {
        self.groups
            .iter()
            .find(|g| g.contains(&class))
            .expect("validated groups cover every class")
    }

    fn probabilities(&self, class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.n();
        let group = self.group_of(class);
        let mates: Vec<usize> = group.iter().copied().filter(|&c| c != class).collect();
        let others: Vec<usize> = (0..n).filter(|c| !group.contains(c)).collect();
        let mut p = vec![0.0; n];
        p[class] = self.self_mass;
        let rest = 1.0 - self.self_mass - self.group_mass;
        let (mate_mass, other_mass) = match (mates.is_empty(), others.is_empty()) {
            (true, true) => (0.0, 0.0),
            (true, false) => (0.0, rest + self.group_mass),
            (false, true) => (rest + self.group_mass, 0.0),
            (false, false) => (self.group_mass, rest),
        };
        if mates.is_empty() && others.is_empty() {
            p[class] = 1.0;
        }
        for (set, mass) in [(&mates, mate_mass), (&others, other_mass)] {
            let weights: Vec<f64> = set.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
            let total: f64 = weights.iter().sum();
            for (&c, w) in set.iter().zip(&weights) {
                p[c] = mass * w / total;
            }
        }
        let sum: f64 = p.iter().sum();
        p.iter().map(|v| v / sum).collect()
    }

    fn shifted<'a>(&self, obj: &'a ObjectSpec, rng: &mut ChaCha8Rng) -> Vec<(Rect, &'a PartSpec)> {
        let b = obj.bounds();
        let mut span = |lo: usize, hi: usize, limit: usize| -> i64 {
            let down = lo.min(self.max_shift) as i64;
            let up = (limit - hi).min(self.max_shift) as i64;
            rng.gen_range(-down..=up)
        };
        let dy = span(b.y0, b.y1, self.height);
        let dx = span(b.x0, b.x1, self.width);
        let mv = |v: usize, d: i64| (v as i64 + d) as usize;
        obj.parts
            .iter()
            .map(|p| {
                let r = p.rect;
                (
                    Rect {
                        y0: mv(r.y0, dy),
                        x0: mv(r.x0, dx),
                        y1: mv(r.y1, dy),
                        x1: mv(r.x1, dx),
                    },
                    p,
                )
            })
            .collect()
    }

    fn layer(&self, layer_id: usize, active: &[Rect], rng: &mut ChaCha8Rng) -> LayerDump {
        let (h, w) = (self.height, self.width);
        let plane = h * w;
        let mut features = vec![0.0f32; 2 * plane];
        let mut gradients = vec![0.0f32; 2 * plane];
        let weight = 0.25 * layer_id as f32;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if active.iter().any(|r| r.contains(y, x)) {
                    features[i] = 1.0;
                }
                gradients[i] = weight;
                // distractor channel: arbitrary features, zero-mean gradients
                features[plane + i] = rng.gen_range(0.0..1.0);
                gradients[plane + i] = if i % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        if plane % 2 == 1 {
            gradients[2 * plane - 1] = 0.0;
        }
        LayerDump::new(
            layer_id,
            Tensor::new(vec![2, h, w], features).expect("finite"),
            Tensor::new(vec![2, h, w], gradients).expect("finite"),
        )
        .expect("matching dims")
    }

    pub fn image_id(class: usize, k: usize) -> String {
        format!("img_c{class:02}_{k:02}")
    }

    /// Deterministically generates records, pair dumps and masks.
    pub fn generate(&self, seed: u64) -> Result<ScenarioData> {
        self.validate()?;
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = ScenarioData {
            records: Vec::new(),
            dumps: Vec::new(),
            masks: Vec::new(),
        };
        for class in 0..n {
            for k in 0..self.images_per_class {
                let image_id = Self::image_id(class, k);
                data.records.push(ProbabilityRecord {
                    image_id: image_id.clone(),
                    true_class: class,
                    probs: self.probabilities(class, &mut rng),
                });
                let parts = self.shifted(&self.objects[class], &mut rng);
                let mut mask = BinaryMask::empty(self.height, self.width);
                for (r, _) in &parts {
                    for y in r.y0..r.y1 {
                        for x in r.x0..r.x1 {
                            mask.set(y, x, true);
                        }
                    }
                }
                data.masks.push((image_id.clone(), class, mask));
                for comparison in (0..n).filter(|&c| c != class) {
                    let active: Vec<Rect> = parts
                        .iter()
                        .filter(|(_, p)| p.against.contains(&comparison))
                        .map(|(r, _)| *r)
                        .collect();
                    let layers = (1..=self.layers)
                        .map(|l| self.layer(l, &active, &mut rng))
                        .collect();
                    data.dumps.push(
                        PairDump::new(image_id.clone(), class, comparison, layers)
                            .expect("layers ordered"),
                    );
                }
            }
        }
        Ok(data)
    }

    /// Writes `probabilities.csv`, `dumps/`, `groundtruth/` and a matching
    /// `synth.json` pipeline config under `out`; returns the config.
    pub fn write(&self, seed: u64, out: &Path) -> Result<PipelineConfig> {
        let data = self.generate(seed)?;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_probability_log(&data.records, self.n(), out.join("probabilities.csv"))?;
        let dumps = out.join("dumps");
        for d in &data.dumps {
            write_pair_dump(&dumps, d)?;
        }
        let gt = out.join("groundtruth");
        for (image_id, class, mask) in &data.masks {
            let dir = gt.join(image_id);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_mask_pgm(mask, dir.join(format!("{class}.pgm")))?;
        }
        let smallest_group = self.groups.iter().map(Vec::len).min().unwrap_or(1);
        let mut cfg = PipelineConfig::new(self.class_names.clone());
        cfg.num_clusters = self.groups.len().max(2);
        cfg.min_cluster_size = smallest_group.saturating_sub(1).max(1);
        cfg.seed = seed;
        cfg.paths = PathsConfig {
            probabilities: "probabilities.csv".into(),
            dumps: "dumps".into(),
            groundtruth: "groundtruth".into(),
            out: "run".into(),
        };
        let cfg_path = out.join("synth.json");
        std::fs::write(&cfg_path, cfg.to_json()).map_err(|e| Error::io(&cfg_path, e))?;
        let spec_path = out.join("scenario.json");
        let text = serde_json::to_string_pretty(self).expect("scenario serializes") + "\n";
        std::fs::write(&spec_path, text).map_err(|e| Error::io(&spec_path, e))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}
