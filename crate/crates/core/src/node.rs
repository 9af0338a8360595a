//! Identity of hypergraph vertices: a series at a lag.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Series id reserved for the market index return series.
pub const INDEX_ID: &str = "INDEX";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    News,
    Sentiment,
    Return,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::News, Modality::Sentiment, Modality::Return];

    pub fn name(self) -> &'static str {
        match self {
            Modality::News => "news",
            Modality::Sentiment => "sentiment",
            Modality::Return => "return",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Modality::News => 0,
            Modality::Sentiment => 1,
            Modality::Return => 2,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "news" => Ok(Modality::News),
            "sentiment" => Ok(Modality::Sentiment),
            "return" => Ok(Modality::Return),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

/// One observed series: a modality of one asset, or the index return.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub modality: Modality,
    pub id: String,
}

impl SeriesKey {
    pub fn new(modality: Modality, id: impl Into<String>) -> Self {
        Self { modality, id: id.into() }
    }

    pub fn index() -> Self {
        Self::new(Modality::Return, INDEX_ID)
    }

    pub fn is_index(&self) -> bool {
        self.modality == Modality::Return && self.id == INDEX_ID
    }

    pub fn at_lag(&self, lag: usize) -> LaggedNode {
        LaggedNode { modality: self.modality, series: self.id.clone(), lag }
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.modality, self.id)
    }
}

/// A time-shifted variable. Sources carry `lag >= 1`; prediction targets
/// carry `lag == 0`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaggedNode {
    pub modality: Modality,
    pub series: String,
    pub lag: usize,
}

impl LaggedNode {
    pub fn new(modality: Modality, series: impl Into<String>, lag: usize) -> Self {
        Self { modality, series: series.into(), lag }
    }

    pub fn target(asset: impl Into<String>) -> Self {
        Self::new(Modality::Return, asset, 0)
    }

    pub fn series_key(&self) -> SeriesKey {
        SeriesKey::new(self.modality, self.series.clone())
    }

    pub fn is_target(&self) -> bool {
        self.lag == 0
    }
}

impl fmt::Display for LaggedNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.modality, self.series, self.lag)
    }
}

impl FromStr for LaggedNode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().splitn(3, ':');
        let (Some(m), Some(id), Some(lag)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("malformed node `{s}`, expected modality:series:lag"));
        };
        let lag = lag.parse::<usize>().map_err(|e| format!("bad lag in `{s}`: {e}"))?;
        Ok(LaggedNode::new(m.parse()?, id, lag))
    }
}

/// Checks that an identifier survives the line-oriented text formats.
pub fn valid_series_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(|c| c.is_whitespace() || matches!(c, ':' | ',' | '{' | '}' | '='))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_text_round_trip() {
        let n = LaggedNode::new(Modality::Sentiment, "JPM", 2);
        assert_eq!(n.to_string(), "sentiment:JPM:2");
        assert_eq!("sentiment:JPM:2".parse::<LaggedNode>().unwrap(), n);
        assert!("sentiment:JPM".parse::<LaggedNode>().is_err());
        assert!("vol:JPM:1".parse::<LaggedNode>().is_err());
    }

    #[test]
    fn ids_with_separators_are_rejected() {
        assert!(valid_series_id("BRK.B"));
        assert!(!valid_series_id("a:b"));
        assert!(!valid_series_id("a b"));
        assert!(!valid_series_id(""));
    }
}
