use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The closed set of twelve cultural categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Cuisine,
    Architecture,
    #[serde(rename = "Traditional Clothing")]
    TraditionalClothing,
    #[serde(rename = "Cultural Festivals")]
    CulturalFestivals,
    #[serde(rename = "Daily Life Practices")]
    DailyLifePractices,
    #[serde(rename = "Traditional Sports")]
    TraditionalSports,
    Transportation,
    Handicrafts,
    #[serde(rename = "Musical Instruments")]
    MusicalInstruments,
    #[serde(rename = "Folk Arts")]
    FolkArts,
    Landscapes,
    Miscellaneous,
}

impl Category {
    pub const ALL: [Category; 12] = [
        Category::Cuisine,
        Category::Architecture,
        Category::TraditionalClothing,
        Category::CulturalFestivals,
        Category::DailyLifePractices,
        Category::TraditionalSports,
        Category::Transportation,
        Category::Handicrafts,
        Category::MusicalInstruments,
        Category::FolkArts,
        Category::Landscapes,
        Category::Miscellaneous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Cuisine => "Cuisine",
            Category::Architecture => "Architecture",
            Category::TraditionalClothing => "Traditional Clothing",
            Category::CulturalFestivals => "Cultural Festivals",
            Category::DailyLifePractices => "Daily Life Practices",
            Category::TraditionalSports => "Traditional Sports",
            Category::Transportation => "Transportation",
            Category::Handicrafts => "Handicrafts",
            Category::MusicalInstruments => "Musical Instruments",
            Category::FolkArts => "Folk Arts",
            Category::Landscapes => "Landscapes",
            Category::Miscellaneous => "Miscellaneous",
        }
    }

    /// Categories reported individually in the published composition table;
    /// the remaining four are grouped under "Miscellaneous Categories".
    pub fn listed_in_composition_table(self) -> bool {
        !matches!(
            self,
            Category::MusicalInstruments
                | Category::FolkArts
                | Category::Landscapes
                | Category::Miscellaneous
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown category `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}
