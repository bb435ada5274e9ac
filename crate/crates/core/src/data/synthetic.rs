use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Condition;
use crate::numerics::Tensor;

pub const NUM_KINDS: usize = 3;
pub const NUM_COLORS: usize = 4;
pub const NUM_MOTIONS: usize = 5;
pub const NUM_CLASSES: usize = NUM_KINDS * NUM_COLORS * NUM_MOTIONS;

/// Object colors in `[-1, 1]` RGB.
pub const OBJECT_COLORS: [[f32; 3]; NUM_COLORS] = [
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -0.6, 1.0],
    [1.0, 1.0, -1.0],
];

pub const BACKGROUND_COLORS: [[f32; 3]; 4] = [
    [-0.6, -0.6, -0.6],
    [-0.2, -0.4, -0.7],
    [-0.5, -0.1, -0.4],
    [0.1, 0.0, -0.2],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Square,
    Circle,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; NUM_KINDS] = [ShapeKind::Square, ShapeKind::Circle, ShapeKind::Triangle];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether pixel `(r, c)` of an `s × s` box belongs to the shape.
    pub fn covers(self, r: usize, c: usize, s: usize) -> bool {
        let (y, x, half) = (r as f64 + 0.5, c as f64 + 0.5, s as f64 / 2.0);
        match self {
            ShapeKind::Square => true,
            ShapeKind::Circle => (y - half).powi(2) + (x - half).powi(2) <= half * half,
            ShapeKind::Triangle => (x - half).abs() <= y / 2.0 + 0.25,
        }
    }
}

/// Motion direction class; moving objects travel `speed` px per frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    Static,
    Right,
    Left,
    Down,
    Up,
}

impl Motion {
    pub const ALL: [Motion; NUM_MOTIONS] = [Motion::Static, Motion::Right, Motion::Left, Motion::Down, Motion::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Unit displacement `(rows, cols)` per frame.
    pub fn unit(self) -> (i64, i64) {
        match self {
            Motion::Static => (0, 0),
            Motion::Right => (0, 1),
            Motion::Left => (0, -1),
            Motion::Down => (1, 0),
            Motion::Up => (-1, 0),
        }
    }
}

/// Parameters of one synthetic clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: ShapeKind,
    pub color: usize,
    /// Top-left corner `(row, col)` of the object box in frame 0.
    pub start: (i64, i64),
    pub motion: Motion,
    /// Pixels per frame; zero for static objects.
    pub speed: usize,
    /// Object box edge in pixels.
    pub size: usize,
    pub background: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

/// Class id of a (kind, color, motion) triple.
pub fn encode_class(kind: ShapeKind, color: usize, motion: Motion) -> usize {
    (kind.index() * NUM_COLORS + color) * NUM_MOTIONS + motion.index()
}

pub fn decode_class(id: usize) -> Result<(ShapeKind, usize, Motion)> {
    if id >= NUM_CLASSES {
        return Err(Error::Spec(format!("class id {id} outside [0, {NUM_CLASSES})")));
    }
    let motion = Motion::ALL[id % NUM_MOTIONS];
    let rest = id / NUM_MOTIONS;
    Ok((ShapeKind::ALL[rest / NUM_COLORS], rest % NUM_COLORS, motion))
}

impl SyntheticSpec {
    pub fn class_id(&self) -> usize {
        encode_class(self.kind, self.color, self.motion)
    }

    pub fn condition(&self) -> Condition {
        Condition::new(self.class_id(), self.speed)
    }

    /// Displacement `(rows, cols)` per frame.
    pub fn velocity(&self) -> (i64, i64) {
        let (dr, dc) = self.motion.unit();
        (dr * self.speed as i64, dc * self.speed as i64)
    }

    pub fn position(&self, frame: usize) -> (i64, i64) {
        let (dr, dc) = self.velocity();
        (self.start.0 + dr * frame as i64, self.start.1 + dc * frame as i64)
    }

    /// Whether the object stays inside the frame for every frame.
    pub fn fits(&self) -> bool {
        let last = self.frames.saturating_sub(1);
        [0, last].iter().all(|&f| {
            let (r, c) = self.position(f);
            r >= 0 && c >= 0 && r as usize + self.size <= self.height && c as usize + self.size <= self.width
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.color >= NUM_COLORS || self.background >= BACKGROUND_COLORS.len() {
            return Err(Error::Spec(format!(
                "color {} / background {} outside palette",
                self.color, self.background
            )));
        }
        if self.size == 0 || self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Spec("size, frames, height and width must be positive".into()));
        }
        if (self.motion == Motion::Static) != (self.speed == 0) {
            return Err(Error::Spec(format!(
                "motion {:?} inconsistent with speed {}",
                self.motion, self.speed
            )));
        }
        if !self.fits() {
            return Err(Error::Spec(format!(
                "object of size {} starting at {:?} moving {:?} leaves the {}x{} frame",
                self.size, self.start, self.motion, self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Draws the clip. Returns the `f × H × W × 3` video in `[-1, 1]` and the
/// `f × H × W` binary object mask.
pub fn render(spec: &SyntheticSpec) -> Result<(Tensor<f32>, Tensor<f32>)> {
    spec.validate()?;
    let (f, h, w) = (spec.frames, spec.height, spec.width);
    let bg = BACKGROUND_COLORS[spec.background];
    let fg = OBJECT_COLORS[spec.color];
    let mut video = Vec::with_capacity(f * h * w * 3);
    for _ in 0..f * h * w {
        video.extend_from_slice(&bg);
    }
    let mut mask = vec![0.0f32; f * h * w];
    for frame in 0..f {
        let (r0, c0) = spec.position(frame);
        for r in 0..spec.size {
            for c in 0..spec.size {
                if spec.kind.covers(r, c, spec.size) {
                    let pix = (frame * h + r0 as usize + r) * w + c0 as usize + c;
                    mask[pix] = 1.0;
                    video[3 * pix..3 * pix + 3].copy_from_slice(&fg);
                }
            }
        }
    }
    Ok((Tensor::new(vec![f, h, w, 3], video)?, Tensor::new(vec![f, h, w], mask)?))
}

/// Edit categories: appearance edits change a noun (color or kind), motion edits change the verb.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditKind {
    Color,
    Shape,
    Motion,
}

/// Spec drawn uniformly over kinds, colors, motions, sizes and feasible starts.
pub fn random_spec<R: Rng>(rng: &mut R, frames: usize, height: usize, width: usize) -> Result<SyntheticSpec> {
    let motion = Motion::ALL[rng.random_range(0..NUM_MOTIONS)];
    let size = rng.random_range(4..=5);
    let speed = usize::from(motion != Motion::Static);
    let mut spec = SyntheticSpec {
        kind: ShapeKind::ALL[rng.random_range(0..NUM_KINDS)],
        color: rng.random_range(0..NUM_COLORS),
        start: (0, 0),
        motion,
        speed,
        size,
        background: rng.random_range(0..BACKGROUND_COLORS.len()),
        frames,
        height,
        width,
    };
    let starts: Vec<(i64, i64)> = (0..height as i64)
        .flat_map(|r| (0..width as i64).map(move |c| (r, c)))
        .filter(|&p| SyntheticSpec { start: p, ..spec }.fits())
        .collect();
    spec.start = *starts
        .choose(rng)
        .ok_or_else(|| Error::Spec(format!("no feasible start for {size}px object moving {motion:?}")))?;
    Ok(spec)
}

/// Picks an edit target: a different color or kind, or a different
/// feasible motion. Motion edits fall back to a color edit when no other
/// direction keeps the object in frame.
pub fn random_edit<R: Rng>(rng: &mut R, src: &SyntheticSpec) -> (EditKind, SyntheticSpec) {
    let kind = [EditKind::Color, EditKind::Shape, EditKind::Motion][rng.random_range(0..3)];
    let color_edit = |rng: &mut R| {
        let color = (src.color + rng.random_range(1..NUM_COLORS)) % NUM_COLORS;
        (EditKind::Color, SyntheticSpec { color, ..*src })
    };
    match kind {
        EditKind::Color => color_edit(rng),
        EditKind::Shape => {
            let k = (src.kind.index() + rng.random_range(1..NUM_KINDS)) % NUM_KINDS;
            (
                EditKind::Shape,
                SyntheticSpec {
                    kind: ShapeKind::ALL[k],
                    ..*src
                },
            )
        }
        EditKind::Motion => {
            let options: Vec<SyntheticSpec> = Motion::ALL
                .iter()
                .filter(|&&m| m != src.motion)
                .map(|&m| SyntheticSpec {
                    motion: m,
                    speed: usize::from(m != Motion::Static),
                    ..*src
                })
                .filter(|s| s.fits())
                .collect();
            match options.choose(rng) {
                Some(t) => (EditKind::Motion, *t),
                None => color_edit(rng),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn base() -> SyntheticSpec {
        SyntheticSpec {
            kind: ShapeKind::Square,
            color: 0,
            start: (3, 2),
            motion: Motion::Right,
            speed: 1,
            size: 4,
            background: 1,
            frames: 8,
            height: 16,
            width: 16,
        }
    }

    #[test]
    fn static_object_gives_identical_frames() {
        let s = SyntheticSpec {
            motion: Motion::Static,
            speed: 0,
            ..base()
        };
        let (v, _) = render(&s).unwrap();
        let frame = 16 * 16 * 3;
        for f in 1..8 {
            assert_eq!(&v.data()[f * frame..(f + 1) * frame], &v.data()[..frame]);
        }
    }

    #[test]
    fn square_translates_exactly() {
        let (v, m) = render(&base()).unwrap();
        for f in 0..8 {
            for r in 0..16 {
                for c in 0..16 {
                    let src = if c >= f { Some(c - f) } else { None };
                    let here = m.data()[(f * 16 + r) * 16 + c];
                    let want = src.map_or(0.0, |c0| m.data()[r * 16 + c0]);
                    if c >= f {
                        assert_eq!(here, want);
                        for ch in 0..3 {
                            let a = v.data()[((f * 16 + r) * 16 + c) * 3 + ch];
                            let b = v.data()[((r) * 16 + c - f) * 3 + ch];
                            assert_eq!(a, b);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn mask_area_constant_and_binary() {
        for kind in ShapeKind::ALL {
            let (_, m) = render(&SyntheticSpec { kind, size: 5, ..base() }).unwrap();
            let areas: Vec<f32> = m.data().chunks(256).map(|fr| fr.iter().sum()).collect();
            assert!(areas.iter().all(|&a| a == areas[0] && a > 0.0));
            assert!(m.data().iter().all(|&x| x == 0.0 || x == 1.0));
        }
    }

    #[test]
    fn leaving_frame_is_spec_error() {
        let s = SyntheticSpec { start: (3, 10), ..base() };
        assert!(matches!(render(&s), Err(Error::Spec(_))));
    }

    #[test]
    fn class_id_is_bijective() {
        let mut seen = std::collections::BTreeSet::new();
        for kind in ShapeKind::ALL {
            for color in 0..NUM_COLORS {
                for motion in Motion::ALL {
                    let id = encode_class(kind, color, motion);
                    assert_eq!(decode_class(id).unwrap(), (kind, color, motion));
                    seen.insert(id);
                }
            }
        }
        assert_eq!(seen.len(), NUM_CLASSES);
        assert!(decode_class(NUM_CLASSES).is_err());
    }

    #[test]
    fn random_specs_and_edits_are_valid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = random_spec(&mut rng, 8, 16, 16).unwrap();
            s.validate().unwrap();
            let (kind, t) = random_edit(&mut rng, &s);
            t.validate().unwrap();
            assert_ne!(s.class_id(), t.class_id(), "{kind:?}");
        }
    }
}
