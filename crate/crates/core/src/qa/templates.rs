//! Fixed question and answer surface text.
//!
//! Bump [`TEMPLATE_VERSION`] whenever any string here changes; generated
//! corpora record it so answers stay comparable across runs.

use crate::raster::{DirectionBin, LandCover};

pub const TEMPLATE_VERSION: &str = "1";

pub const YES: &str = "Yes";
pub const NO: &str = "No";

/// Plural noun phrase used in questions.
pub fn plural(class: LandCover) -> &'static str {
    match class {
        LandCover::Background => "background areas",
        LandCover::Building => "buildings",
        LandCover::Road => "roads",
        LandCover::Water => "water areas",
        LandCover::Barren => "barren lands",
        LandCover::Forest => "forests",
        LandCover::Agriculture => "agricultural lands",
        LandCover::Playground => "playgrounds",
    }
}

/// Mass noun used in descriptive sentences.
pub fn mass_noun(class: LandCover) -> &'static str {
    match class {
        LandCover::Background => "background",
        LandCover::Building => "buildings",
        LandCover::Road => "roads",
        LandCover::Water => "water",
        LandCover::Barren => "barren land",
        LandCover::Forest => "forest",
        LandCover::Agriculture => "agricultural land",
        LandCover::Playground => "playgrounds",
    }
}

pub fn q_exists(class: LandCover) -> String {
    format!("Are there any {} in this scene?", plural(class))
}

pub fn q_count(class: LandCover) -> String {
    format!("How many {} are there in this scene?", plural(class))
}

pub fn q_area(class: LandCover) -> String {
    format!("What is the area proportion of {} in this scene?", plural(class))
}

pub const Q_LAND_USE: &str = "What are the land-use types in this scene?";
pub const Q_SCHOOL: &str = "Are there any schools in this scene?";
pub const Q_INTERSECTION_NEAR_SCHOOL: &str = "Are there any intersections near the school?";
pub const Q_VILLAGE: &str = "Are there any residential areas in this scene?";
pub const Q_BUILDINGS_NEAR_WATER: &str = "Are there any buildings near the water?";
pub const Q_COUNT_INTERSECTIONS: &str = "How many intersections are there in this scene?";
pub const Q_COUNT_VILLAGE_BUILDINGS: &str = "How many buildings are in the residential area?";
pub const Q_TREE_DISTRIBUTION: &str = "What are the distributions of the trees?";
pub const Q_BUILDING_ARRANGEMENT: &str = "What is the arrangement of the buildings?";
pub const Q_ROAD_DIRECTIONS: &str = "What are the directions of the main roads?";
pub const Q_TRAFFIC: &str = "What are the comprehensive traffic situations in this scene?";
pub const Q_RENOVATION: &str = "What are the renovation needs of the residential area?";
pub const Q_LAND_COVER: &str = "What are the main land-cover types in this scene?";

/// `(k*10%, (k+1)*10%]`, or `0%` for an absent class.
pub fn area_bin(k: Option<u32>) -> String {
    match k {
        None => "0%".to_string(),
        Some(k) => format!("({}%, {}%]", k * 10, (k + 1) * 10),
    }
}

/// `A`, `A and B`, `A, B and C`.
pub fn join_list<S: AsRef<str>>(items: &[S]) -> String {
    match items {
        [] => String::new(),
        [one] => one.as_ref().to_string(),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(|s| s.as_ref()).collect();
            format!("{} and {}", head.join(", "), last.as_ref())
        }
    }
}

pub fn directions(dirs: &[DirectionBin]) -> String {
    let tokens: Vec<&str> = dirs.iter().map(|d| d.token()).collect();
    join_list(&tokens)
}

pub const NO_MAIN_ROADS: &str = "There are no main roads.";
pub const NO_ROADS: &str = "There are no roads.";
pub const NO_INTERSECTIONS: &str = "There are no intersections.";
pub const NO_TREES: &str = "There are no trees.";
pub const FEW_BUILDINGS: &str = "There are too few buildings.";
pub const SCATTERED_BUILDINGS: &str = "The buildings are scattered.";
pub const NO_VILLAGE: &str = "There is no residential area.";

pub fn intersections(n: usize) -> String {
    match n {
        0 => NO_INTERSECTIONS.to_string(),
        1 => "There is 1 intersection.".to_string(),
        n => format!("There are {n} intersections."),
    }
}

pub fn buildings_along(dir: DirectionBin) -> String {
    format!("The buildings are arranged along the {} direction.", dir.token())
}

pub fn tree_distribution(kinds: &[&str]) -> String {
    if kinds.is_empty() {
        return NO_TREES.to_string();
    }
    format!("There are {}.", join_list(kinds))
}

pub const TREES_FOREST: &str = "forests";
pub const TREES_GREEN_BELT: &str = "road green belts";
pub const TREES_RESIDENTIAL: &str = "residential greening";

pub fn renovation(buildings: usize, needs_planting: bool) -> String {
    if needs_planting {
        format!("The residential area with {buildings} buildings needs supplemental planting.")
    } else {
        format!("The residential area with {buildings} buildings has sufficient greening.")
    }
}

/// Five phrasings of the dominant land-cover description.
pub fn land_cover_descriptions(top: &[LandCover]) -> [String; 5] {
    match top {
        [] => [
            "The scene is mostly background.".to_string(),
            "Most of this scene is background.".to_string(),
            "Background covers this scene.".to_string(),
            "The main land-cover type is background.".to_string(),
            "This scene is dominated by background.".to_string(),
        ],
        [a] => {
            let a = mass_noun(*a);
            [
                format!("The scene is mainly covered by {a}."),
                format!("Most of the area is {a}."),
                format!("{} dominates this scene.", capitalize(a)),
                format!("The main land-cover type is {a}."),
                format!("This scene is dominated by {a}."),
            ]
        }
        [a, b, ..] => {
            let (a, b) = (mass_noun(*a), mass_noun(*b));
            [
                format!("The scene is mainly covered by {a} and {b}."),
                format!("Most of the area is {a}, followed by {b}."),
                format!("{} and {b} dominate this scene.", capitalize(a)),
                format!("The main land-cover types are {a} and {b}."),
                format!("This scene is dominated by {a}, with some {b}."),
            ]
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists() {
        assert_eq!(join_list::<&str>(&[]), "");
        assert_eq!(join_list(&["a"]), "a");
        assert_eq!(join_list(&["a", "b"]), "a and b");
        assert_eq!(join_list(&["a", "b", "c"]), "a, b and c");
        assert_eq!(
            directions(&[DirectionBin::EW, DirectionBin::NS]),
            "E--W and N--S"
        );
    }

    #[test]
    fn bins() {
        assert_eq!(area_bin(None), "0%");
        assert_eq!(area_bin(Some(1)), "(10%, 20%]");
        assert_eq!(area_bin(Some(9)), "(90%, 100%]");
    }
}
