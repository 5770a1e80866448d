//! Synthetic scenes, the template question grammar, the rule-based answer
//! function, and the scripted gold-dialog generator.

mod gold;
mod grammar;
mod scene;

pub use gold::{candidate_filter, generate_gold_dialog, BalancedPlanner};
pub use grammar::{normalize_question, parse_question, tokenize, QuestionType};
pub use scene::{
    generate_scene, generate_world, read_scenes, render_scene_text, write_scenes, SceneSpec,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! lexicon {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| Error::InvalidCategory(s.to_string()))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(self.name())
            }
        }
    };
}

lexicon!(
    /// Object category lexicon.
    Category {
        Person => "person",
        Dog => "dog",
        Cat => "cat",
        Car => "car",
        Bus => "bus",
        Chair => "chair",
        Table => "table",
        Bottle => "bottle",
        Plant => "plant",
        Ball => "ball",
    }
);

lexicon!(
    Color {
        Red => "red",
        Blue => "blue",
        Green => "green",
        Yellow => "yellow",
        White => "white",
        Black => "black",
        Brown => "brown",
        Pink => "pink",
    }
);

lexicon!(
    SizeClass {
        Small => "small",
        Medium => "medium",
        Large => "large",
    }
);

lexicon!(
    /// Half-plane of the image, judged by the bounding-box center.
    Half {
        Left => "left",
        Right => "right",
        Top => "top",
        Bottom => "bottom",
    }
);

/// Normalized `(x_min, y_min, x_max, y_max)`; `y` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox {
            x_min: v[0],
            y_min: v[1],
            x_max: v[2],
            y_max: v[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Centers exactly on the 0.5 line belong to neither half.
    pub fn in_half(&self, half: Half) -> bool {
        let (cx, cy) = self.center();
        match half {
            Half::Left => cx < 0.5,
            Half::Right => cx > 0.5,
            Half::Top => cy < 0.5,
            Half::Bottom => cy > 0.5,
        }
    }

    pub fn is_valid(&self) -> bool {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        in_unit(self.x_min)
            && in_unit(self.y_min)
            && in_unit(self.x_max)
            && in_unit(self.y_max)
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: usize,
    pub category: Category,
    pub color: Color,
    pub size_class: SizeClass,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: u64,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn object(&self, id: usize) -> Result<&SceneObject> {
        self.objects.get(id).ok_or(Error::InvalidTarget {
            target: id,
            objects: self.objects.len(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.len() < 2 {
            return Err(Error::InvalidScene(format!(
                "scene {} has {} objects; at least 2 required",
                self.scene_id,
                self.objects.len()
            )));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.id != i {
                return Err(Error::InvalidScene(format!(
                    "scene {}: object at position {i} has id {}",
                    self.scene_id, o.id
                )));
            }
            if !o.bbox.is_valid() {
                return Err(Error::InvalidScene(format!(
                    "scene {}: object {i} has invalid bbox {:?}",
                    self.scene_id, o.bbox
                )));
            }
        }
        Ok(())
    }

    /// Returns a copy with objects reordered by `perm` (new position `i`
    /// holds old object `perm[i]`), ids renumbered to match.
    pub fn permuted(&self, perm: &[usize]) -> Scene {
        let objects = perm
            .iter()
            .enumerate()
            .map(|(i, &old)| SceneObject {
                id: i,
                ..self.objects[old].clone()
            })
            .collect();
        Scene {
            scene_id: self.scene_id,
            objects,
        }
    }
}

/// Closed three-way answer set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnswerClass {
    Yes,
    No,
    NA,
}

impl AnswerClass {
    pub const ALL: [AnswerClass; 3] = [AnswerClass::Yes, AnswerClass::No, AnswerClass::NA];

    pub fn index(self) -> usize {
        match self {
            AnswerClass::Yes => 0,
            AnswerClass::No => 1,
            AnswerClass::NA => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Wire form used in game logs.
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerClass::Yes => "yes",
            AnswerClass::No => "no",
            AnswerClass::NA => "n/a",
        }
    }

    /// Vocabulary token used when the answer is appended to a question.
    pub fn token(self) -> &'static str {
        match self {
            AnswerClass::Yes => "yes",
            AnswerClass::No => "no",
            AnswerClass::NA => "na",
        }
    }

    /// Case-insensitive parse of `yes`, `no` or `n/a`.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Some(AnswerClass::Yes),
            "no" => Some(AnswerClass::No),
            "n/a" => Some(AnswerClass::NA),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            AnswerClass::Yes => AnswerClass::No,
            AnswerClass::No => AnswerClass::Yes,
            AnswerClass::NA => AnswerClass::NA,
        }
    }
}

impl fmt::Display for AnswerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl Serialize for AnswerClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AnswerClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        AnswerClass::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown answer {s:?}")))
    }
}

/// Meaning of a question under the template grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuestionSemantics {
    Category(Category),
    Color(Color),
    SizeClass(SizeClass),
    /// `category` is set for the "is it the <category> on the <half>" form.
    LocationHalf {
        half: Half,
        category: Option<Category>,
    },
    Unparseable,
}

impl QuestionSemantics {
    /// Canonical surface form, including the trailing `?`.
    pub fn text(&self) -> String {
        match self {
            QuestionSemantics::Category(c) => format!("is it a {c}?"),
            QuestionSemantics::Color(c) => format!("is it {c}?"),
            QuestionSemantics::SizeClass(s) => format!("is it {s}?"),
            QuestionSemantics::LocationHalf {
                half,
                category: None,
            } => format!("is it on the {half}?"),
            QuestionSemantics::LocationHalf {
                half,
                category: Some(c),
            } => format!("is it the {c} on the {half}?"),
            QuestionSemantics::Unparseable => "is it something else?".to_string(),
        }
    }

    pub fn question_type(&self) -> QuestionType {
        match self {
            QuestionSemantics::Category(_) => QuestionType::Object,
            QuestionSemantics::Color(_) => QuestionType::Color,
            QuestionSemantics::SizeClass(_) => QuestionType::Size,
            QuestionSemantics::LocationHalf { .. } => QuestionType::Location,
            QuestionSemantics::Unparseable => QuestionType::Other,
        }
    }

    /// Whether `obj` satisfies the question; `None` for unparseable ones.
    pub fn holds_for(&self, obj: &SceneObject) -> Option<bool> {
        Some(match *self {
            QuestionSemantics::Category(c) => obj.category == c,
            QuestionSemantics::Color(c) => obj.color == c,
            QuestionSemantics::SizeClass(s) => obj.size_class == s,
            QuestionSemantics::LocationHalf { half, category } => {
                obj.bbox.in_half(half) && category.is_none_or(|c| obj.category == c)
            }
            QuestionSemantics::Unparseable => return None,
        })
    }
}

/// Scenes keyed by id, for joining game logs back to their scenes.
pub type SceneMap = std::collections::BTreeMap<u64, Scene>;

pub fn scene_map(scenes: &[Scene]) -> SceneMap {
    scenes.iter().map(|s| (s.scene_id, s.clone())).collect()
}

pub fn lookup_scene(scenes: &SceneMap, scene_id: u64) -> Result<&Scene> {
    scenes
        .get(&scene_id)
        .ok_or_else(|| Error::InvalidData(format!("no scene with id {scene_id}")))
}

/// Ground-truth answer of the perfect oracle.
pub fn rule_answer(
    scene: &Scene,
    target_id: usize,
    semantics: &QuestionSemantics,
) -> Result<AnswerClass> {
    let target = scene.object(target_id)?;
    Ok(match semantics.holds_for(target) {
        Some(true) => AnswerClass::Yes,
        Some(false) => AnswerClass::No,
        None => AnswerClass::NA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn obj(id: usize, category: Category, color: Color, bbox: [f64; 4]) -> SceneObject {
        SceneObject {
            id,
            category,
            color,
            size_class: SizeClass::Medium,
            bbox: bbox.into(),
        }
    }

    fn two_object_scene() -> Scene {
        Scene {
            scene_id: 1,
            objects: vec![
                obj(0, Category::Person, Color::Red, [0.1, 0.1, 0.3, 0.3]),
                obj(1, Category::Dog, Color::Blue, [0.6, 0.6, 0.8, 0.8]),
            ],
        }
    }

    #[test]
    fn rule_answer_category() {
        let s = two_object_scene();
        let a = rule_answer(&s, 0, &QuestionSemantics::Category(Category::Person)).unwrap();
        assert_eq!(a, AnswerClass::Yes);
        let a = rule_answer(&s, 1, &QuestionSemantics::Category(Category::Person)).unwrap();
        assert_eq!(a, AnswerClass::No);
    }

    #[test]
    fn rule_answer_location() {
        let s = two_object_scene();
        // object 1 center x = 0.7
        let q = QuestionSemantics::LocationHalf {
            half: Half::Left,
            category: None,
        };
        assert_eq!(rule_answer(&s, 1, &q).unwrap(), AnswerClass::No);
        assert_eq!(rule_answer(&s, 0, &q).unwrap(), AnswerClass::Yes);
    }

    #[test]
    fn rule_answer_unparseable_is_na() {
        let s = two_object_scene();
        assert_eq!(
            rule_answer(&s, 0, &QuestionSemantics::Unparseable).unwrap(),
            AnswerClass::NA
        );
    }

    #[test]
    fn rule_answer_bad_target() {
        let s = two_object_scene();
        assert!(matches!(
            rule_answer(&s, 5, &QuestionSemantics::Unparseable),
            Err(Error::InvalidTarget {
                target: 5,
                objects: 2
            })
        ));
    }

    #[test]
    fn center_on_the_line_is_no() {
        let b = BBox::from([0.4, 0.4, 0.6, 0.6]);
        for h in Half::ALL {
            assert!(!b.in_half(*h));
        }
    }

    #[test]
    fn compound_location_requires_category() {
        let s = two_object_scene();
        let q = QuestionSemantics::LocationHalf {
            half: Half::Left,
            category: Some(Category::Dog),
        };
        assert_eq!(rule_answer(&s, 0, &q).unwrap(), AnswerClass::No);
    }

    #[test]
    fn answer_parse_is_case_insensitive() {
        assert_eq!(AnswerClass::parse("YES"), Some(AnswerClass::Yes));
        assert_eq!(AnswerClass::parse("N/A"), Some(AnswerClass::NA));
        assert_eq!(AnswerClass::parse("maybe"), None);
    }
}
