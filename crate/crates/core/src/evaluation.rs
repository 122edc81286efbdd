//! Expert-evaluation algebra: rating matrices built from Likert ballots,
//! criterion weights derived from expert scores, weighted proportions
//! `B = A·R`, and the 5-to-1 point score.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CRITERIA: usize = 4;
pub const LEVELS: usize = 5;

/// Points for (very satisfied, satisfied, average, dissatisfied, very dissatisfied).
pub const LEVEL_POINTS: [f32; LEVELS] = [5.0, 4.0, 3.0, 2.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    Style,
    Color,
    Fabric,
    Variety,
}

impl Criterion {
    pub const ALL: [Criterion; CRITERIA] = [Criterion::Style, Criterion::Color, Criterion::Fabric, Criterion::Variety];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Criterion::Style => "D1-Style",
            Criterion::Color => "D2-Color",
            Criterion::Fabric => "D3-Fabric",
            Criterion::Variety => "D4-Variety",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    /// Accepts `D1`..`D4`, the full labels, bare names, or `1`..`4`.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.split('-').next_back().unwrap_or(&key);
        match key {
            "d1" | "1" | "style" => Ok(Criterion::Style),
            "d2" | "2" | "color" | "colour" => Ok(Criterion::Color),
            "d3" | "3" | "fabric" => Ok(Criterion::Fabric),
            "d4" | "4" | "variety" | "diversity" => Ok(Criterion::Variety),
            _ => Err(Error::OutOfRange(format!("unknown criterion {s:?}"))),
        }
    }
}

/// Likert level, 5 = very satisfied down to 1 = very dissatisfied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Level(u8);

impl Level {
    pub fn new(value: u8) -> Result<Self> {
        if (1..=5).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::OutOfRange(format!("Likert level {value} not in 1..=5")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Column in the rating matrix (0 = very satisfied).
    pub fn column(self) -> usize {
        usize::from(5 - self.0)
    }
}

/// One rater's levels for one evaluated set, indexed by criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikertBallot {
    pub rater_id: String,
    pub levels: [Level; CRITERIA],
}

/// Row-stochastic `criteria × levels` proportions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    rows: [[f32; LEVELS]; CRITERIA],
}

const ROW_SUM_TOL: f32 = 1e-3;

impl RatingMatrix {
    pub fn new(rows: [[f32; LEVELS]; CRITERIA]) -> Result<Self> {
        for (c, row) in rows.iter().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::OutOfRange(format!("rating row {c} has entries outside [0, 1]")));
            }
            let sum: f32 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotNormalized(sum));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[[f32; LEVELS]; CRITERIA] {
        &self.rows
    }

    pub fn row(&self, criterion: Criterion) -> &[f32; LEVELS] {
        &self.rows[criterion.index()]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("criterion,very_satisfied,satisfied,average,dissatisfied,very_dissatisfied\n");
        for (criterion, row) in Criterion::ALL.iter().zip(&self.rows) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&format!("{},{}\n", criterion.label(), cells.join(",")));
        }
        out
    }

    /// Reads the 4×5 CSV written by [`RatingMatrix::to_csv`].
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = [[f32::NAN; LEVELS]; CRITERIA];
        let mut seen = [false; CRITERIA];
        for record in rdr.records() {
            let record = record?;
            if record.len() != LEVELS + 1 {
                return Err(Error::MalformedFile(format!("rating row with {} fields", record.len())));
            }
            let criterion: Criterion = record[0].parse()?;
            for (slot, cell) in rows[criterion.index()].iter_mut().zip(record.iter().skip(1)) {
                *slot = cell
                    .parse()
                    .map_err(|_| Error::MalformedFile(format!("bad proportion {cell:?}")))?;
            }
            seen[criterion.index()] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::MalformedFile(format!("missing row for {}", Criterion::ALL[missing])));
        }
        Self::new(rows)
    }
}

/// Convex criterion weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector([f32; CRITERIA]);

impl WeightVector {
    pub fn new(weights: [f32; CRITERIA]) -> Result<Self> {
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::OutOfRange("negative criterion weight".into()));
        }
        let sum: f32 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized(sum));
        }
        Ok(Self(weights))
    }

    pub fn as_array(&self) -> &[f32; CRITERIA] {
        &self.0
    }
}

/// Per-criterion tallies of ratings; rows are normalised into a
/// [`RatingMatrix`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingTally {
    counts: [[u64; LEVELS]; CRITERIA],
}

impl RatingTally {
    pub fn add(&mut self, criterion: Criterion, level: Level) {
        self.counts[criterion.index()][level.column()] += 1;
    }

    pub fn add_ballot(&mut self, ballot: &LikertBallot) {
        for (criterion, level) in Criterion::ALL.iter().zip(ballot.levels) {
            self.add(*criterion, level);
        }
    }

    pub fn counts(&self) -> &[[u64; LEVELS]; CRITERIA] {
        &self.counts
    }

    pub fn to_matrix(&self) -> Result<RatingMatrix> {
        let mut rows = [[0.0f32; LEVELS]; CRITERIA];
        for (row, counts) in rows.iter_mut().zip(&self.counts) {
            let total: u64 = counts.iter().sum();
            if total == 0 {
                return Err(Error::EmptyBallots);
            }
            for (r, &c) in row.iter_mut().zip(counts) {
                *r = (c as f64 / total as f64) as f32;
            }
        }
        RatingMatrix::new(rows)
    }
}

/// Entry `(c, ℓ)` is the fraction of ballots giving level `ℓ` to criterion `c`.
pub fn aggregate_ballots(ballots: &[LikertBallot]) -> Result<RatingMatrix> {
    if ballots.is_empty() {
        return Err(Error::EmptyBallots);
    }
    let mut tally = RatingTally::default();
    for b in ballots {
        tally.add_ballot(b);
    }
    tally.to_matrix()
}

/// Reads `rater_id,criterion,level` rows into a tally. Each row is one rating.
pub fn read_ballot_csv(reader: impl Read) -> Result<RatingTally> {
    #[derive(Deserialize)]
    struct Row {
        #[allow(dead_code)]
        rater_id: String,
        criterion: String,
        level: u8,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut tally = RatingTally::default();
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        tally.add(row.criterion.parse()?, Level::new(row.level)?);
    }
    Ok(tally)
}

/// Reads `expert,d1,d2,d3,d4` rows: one expert's 1..=5 score per criterion.
pub fn read_expert_scores_csv(reader: impl Read) -> Result<Vec<[u8; CRITERIA]>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != CRITERIA + 1 {
            return Err(Error::MalformedFile(format!("expert row with {} fields", record.len())));
        }
        let mut row = [0u8; CRITERIA];
        for (slot, cell) in row.iter_mut().zip(record.iter().skip(1)) {
            *slot = cell
                .parse()
                .map_err(|_| Error::MalformedFile(format!("bad expert score {cell:?}")))?;
        }
        out.push(row);
    }
    Ok(out)
}

/// `B = A·R`: weighted level proportions.
pub fn weighted_proportions(ratings: &RatingMatrix, weights: &WeightVector) -> [f32; LEVELS] {
    let mut out = [0.0f32; LEVELS];
    for (row, &a) in ratings.rows.iter().zip(&weights.0) {
        for (o, &r) in out.iter_mut().zip(row) {
            *o += a * r;
        }
    }
    out
}

/// Expected points under the 5-to-1 Likert scale.
pub fn likert_score(weighted: &[f32; LEVELS]) -> Result<f32> {
    let sum: f32 = weighted.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::NotNormalized(sum));
    }
    Ok(weighted.iter().zip(LEVEL_POINTS).map(|(w, p)| w * p).sum())
}

/// Integer percentages summing to exactly 100, by largest remainder.
/// Ties in the remainder go to the earlier entry.
pub fn largest_remainder_percentages(totals: &[u64]) -> Result<Vec<u32>> {
    let sum: u64 = totals.iter().sum();
    if totals.is_empty() || sum == 0 {
        return Err(Error::EmptyScores);
    }
    // Exact integer arithmetic: quota_i = 100·t_i / sum.
    let mut pct: Vec<u32> = totals.iter().map(|&t| (100 * t / sum) as u32).collect();
    let remainders: Vec<u64> = totals.iter().map(|&t| (100 * t) % sum).collect();
    let short = 100 - pct.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..totals.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    for &i in order.iter().take(short as usize) {
        pct[i] += 1;
    }
    Ok(pct)
}

/// Criterion weights from a `criteria × experts` score table (scores 1..=5):
/// row totals normalised to integer percentages.
pub fn derive_weights(expert_scores: &[[u8; CRITERIA]]) -> Result<WeightVector> {
    if expert_scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut totals = [0u64; CRITERIA];
    for expert in expert_scores {
        for (t, &s) in totals.iter_mut().zip(expert) {
            if !(1..=5).contains(&s) {
                return Err(Error::OutOfRange(format!("expert score {s} not in 1..=5")));
            }
            *t += u64::from(s);
        }
    }
    let pct = largest_remainder_percentages(&totals)?;
    let mut weights = [0.0f32; CRITERIA];
    for (w, p) in weights.iter_mut().zip(pct) {
        *w = p as f32 / 100.0;
    }
    // Percent fractions may round to a sum a few ulps off 1.
    let sum: f32 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized(sum));
    }
    Ok(WeightVector(weights))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub weighted: [f32; LEVELS],
    pub score: f32,
    pub weights: [f32; CRITERIA],
}

pub fn evaluate(ratings: &RatingMatrix, weights: &WeightVector) -> Result<EvaluationReport> {
    let weighted = weighted_proportions(ratings, weights);
    Ok(EvaluationReport {
        weighted,
        score: likert_score(&weighted)?,
        weights: weights.0,
    })
}

/// Published expert-study data: per-criterion rating rows of five systems,
/// their printed weighted rows and scores, and the expert weight table.
pub mod reference {
    use super::{CRITERIA, LEVELS};

    pub struct PublishedSystem {
        pub name: &'static str,
        pub rows: [[f32; LEVELS]; CRITERIA],
        pub weighted: [f32; LEVELS],
        pub score: f32,
    }

    pub const WEIGHTS: [f32; CRITERIA] = [0.24, 0.25, 0.21, 0.30];

    /// Scores of five experts, one array per expert, criteria in D1..D4 order.
    pub const EXPERT_SCORES: [[u8; CRITERIA]; 5] = [[4, 4, 3, 4], [2, 3, 2, 4], [4, 4, 4, 4], [3, 3, 3, 4], [4, 4, 3, 5]];

    pub const SYSTEMS: [PublishedSystem; 5] = [
        PublishedSystem {
            name: "GenMatching",
            rows: [
                [0.070, 0.300, 0.388, 0.182, 0.06],
                [0.052, 0.176, 0.282, 0.346, 0.144],
                [0.054, 0.224, 0.344, 0.296, 0.082],
                [0.048, 0.118, 0.346, 0.292, 0.196],
            ],
            weighted: [0.056, 0.198, 0.340, 0.280, 0.126],
            score: 2.777,
        },
        PublishedSystem {
            name: "RetMatching",
            rows: [
                [0.116, 0.41, 0.346, 0.110, 0.018],
                [0.120, 0.376, 0.330, 0.152, 0.022],
                [0.086, 0.430, 0.380, 0.098, 0.006],
                [0.128, 0.400, 0.370, 0.086, 0.016],
            ],
            weighted: [0.114, 0.403, 0.356, 0.111, 0.016],
            score: 3.489,
        },
        PublishedSystem {
            name: "GenMatching+",
            rows: [
                [0.100, 0.418, 0.364, 0.112, 0.006],
                [0.090, 0.348, 0.346, 0.200, 0.016],
                [0.070, 0.398, 0.440, 0.086, 0.006],
                [0.076, 0.420, 0.390, 0.106, 0.008],
            ],
            weighted: [0.084, 0.397, 0.383, 0.127, 0.009],
            score: 3.420,
        },
        PublishedSystem {
            name: "RetMatching+",
            rows: [
                [0.122, 0.456, 0.314, 0.090, 0.018],
                [0.118, 0.370, 0.346, 0.128, 0.038],
                [0.128, 0.460, 0.322, 0.078, 0.012],
                [0.144, 0.452, 0.310, 0.082, 0.012],
            ],
            weighted: [0.129, 0.434, 0.322, 0.095, 0.020],
            score: 3.557,
        },
        PublishedSystem {
            name: "HMaVTON",
            rows: [
                [0.120, 0.476, 0.302, 0.092, 0.010],
                [0.114, 0.382, 0.35, 0.134, 0.02],
                [0.132, 0.472, 0.314, 0.074, 0.008],
                [0.13, 0.464, 0.312, 0.086, 0.008],
            ],
            weighted: [0.124, 0.448, 0.32, 0.097, 0.012],
            score: 3.578,
        },
    ];
}
