//! Run reports and their CSV forms.
//!
//! `report.csv` starts with `# key = value` header lines (policy, case,
//! phase, the four seeds, moving-average window and the aggregates), then
//! `episode,seed,verdict,total_reward,stages` rows. `ma_reward.csv` has the
//! same header followed by `episode,total_reward,ma_reward`. `summary.csv`
//! is one row per run: `policy,case,phase,episodes,wins,win_rate,mean_reward`.
//! Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::env::Verdict;

use super::{HarnessError, Phase, SeedStreams};

pub const DEFAULT_MA_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    /// Episode seed fed to the environment's attack stream.
    pub seed: u64,
    pub verdict: Verdict,
    pub total_reward: f64,
    /// Stages played before the episode ended.
    pub stages: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub policy: String,
    pub case: String,
    pub phase: Phase,
    pub seeds: SeedStreams,
    pub ma_window: usize,
    pub rows: Vec<EpisodeRow>,
}

impl RunReport {
    pub fn new(policy: &str, case: &str, phase: Phase, seeds: SeedStreams) -> Self {
        RunReport {
            policy: policy.to_string(),
            case: case.to_string(),
            phase,
            seeds,
            ma_window: DEFAULT_MA_WINDOW,
            rows: Vec::new(),
        }
    }

    pub fn episodes(&self) -> usize {
        self.rows.len()
    }

    pub fn wins(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.verdict == Verdict::Win)
            .count()
    }

    /// `wins / episodes`, 0 for an empty report.
    pub fn win_rate(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.wins() as f64 / self.rows.len() as f64
        }
    }

    pub fn mean_reward(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.rows.iter().map(|r| r.total_reward).sum::<f64>() / self.rows.len() as f64
        }
    }

    /// Trailing mean over `ma_window` episodes; the first entries average
    /// whatever is available.
    pub fn moving_average(&self) -> Vec<f64> {
        let w = self.ma_window.max(1);
        (0..self.rows.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(w);
                let slice = &self.rows[lo..=i];
                slice.iter().map(|r| r.total_reward).sum::<f64>() / slice.len() as f64
            })
            .collect()
    }

    fn header(&self) -> Vec<(&'static str, String)> {
        vec![
            ("policy", self.policy.clone()),
            ("case", self.case.clone()),
            ("phase", self.phase.to_string()),
            ("seed.master", self.seeds.master.to_string()),
            ("seed.attack", self.seeds.attack.to_string()),
            ("seed.init", self.seeds.init.to_string()),
            ("seed.explore", self.seeds.explore.to_string()),
            ("ma_window", self.ma_window.to_string()),
            ("episodes", self.episodes().to_string()),
            ("wins", self.wins().to_string()),
            ("win_rate", self.win_rate().to_string()),
        ]
    }

    fn write_header<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (k, v) in self.header() {
            writeln!(w, "# {k} = {v}")?;
        }
        Ok(())
    }

    pub fn write_report<W: Write>(&self, mut w: W) -> Result<(), HarnessError> {
        self.write_header(&mut w)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["episode", "seed", "verdict", "total_reward", "stages"])?;
        for r in &self.rows {
            csv.write_record([
                r.episode.to_string(),
                r.seed.to_string(),
                r.verdict.to_string(),
                r.total_reward.to_string(),
                r.stages.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_moving_average<W: Write>(&self, mut w: W) -> Result<(), HarnessError> {
        self.write_header(&mut w)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["episode", "total_reward", "ma_reward"])?;
        for (r, ma) in self.rows.iter().zip(self.moving_average()) {
            csv.write_record([
                r.episode.to_string(),
                r.total_reward.to_string(),
                ma.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn report_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_report(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn moving_average_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_moving_average(&mut buf)
            .expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parses a `report.csv`, checking the header aggregates against the rows.
    pub fn parse_report<R: BufRead>(r: R) -> Result<RunReport, HarnessError> {
        let bad = |m: String| HarnessError::Parse(m);
        let mut header = BTreeMap::new();
        let mut body = String::new();
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| bad(format!("bad header line `{line}`")))?;
                header.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let get = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| bad(format!("missing header `{k}`")))
        };
        let num = |k: &str| -> Result<u64, HarnessError> {
            get(k)?
                .parse()
                .map_err(|_| bad(format!("header `{k}` is not an integer")))
        };
        let phase = match get("phase")?.as_str() {
            "train" => Phase::Train,
            "eval" => Phase::Eval,
            other => return Err(bad(format!("unknown phase `{other}`"))),
        };
        let mut report = RunReport {
            policy: get("policy")?,
            case: get("case")?,
            phase,
            seeds: SeedStreams {
                master: num("seed.master")?,
                attack: num("seed.attack")?,
                init: num("seed.init")?,
                explore: num("seed.explore")?,
            },
            ma_window: num("ma_window")? as usize,
            rows: Vec::new(),
        };
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        for rec in rdr.deserialize::<EpisodeRow>() {
            report.rows.push(rec?);
        }
        if num("episodes")? as usize != report.episodes() || num("wins")? as usize != report.wins()
        {
            return Err(bad("header aggregates disagree with rows".into()));
        }
        if get("win_rate")? != report.win_rate().to_string() {
            return Err(bad("header win_rate disagrees with rows".into()));
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub case: String,
    pub phase: String,
    pub episodes: usize,
    pub wins: usize,
    pub win_rate: f64,
    pub mean_reward: f64,
}

impl SummaryRow {
    pub fn of(report: &RunReport) -> Self {
        SummaryRow {
            policy: report.policy.clone(),
            case: report.case.clone(),
            phase: report.phase.to_string(),
            episodes: report.episodes(),
            wins: report.wins(),
            win_rate: report.win_rate(),
            mean_reward: report.mean_reward(),
        }
    }
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_summary<R: std::io::Read>(r: R) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> RunReport {
        let mut r = RunReport::new("half", "ieee14", Phase::Eval, SeedStreams::from_master(5));
        r.ma_window = 3;
        let rewards = [100.0, -2000.5, 1.0 / 3.0, 4000.0, 7.25];
        for (i, &x) in rewards.iter().enumerate() {
            r.rows.push(EpisodeRow {
                episode: i,
                seed: 1000 + i as u64,
                verdict: if x > 0.0 { Verdict::Win } else { Verdict::Lose },
                total_reward: x,
                stages: if x > 0.0 { 3 } else { 1 },
            });
        }
        r
    }

    #[test]
    fn aggregates() {
        let r = report();
        assert_eq!(r.wins(), 4);
        assert_eq!(r.win_rate(), 4.0 / 5.0);
        let ma = r.moving_average();
        assert_eq!(ma[0], 100.0);
        assert_eq!(ma[1], (100.0 - 2000.5) / 2.0);
        assert_eq!(ma[4], (1.0 / 3.0 + 4000.0 + 7.25) / 3.0);
    }

    #[test]
    fn report_round_trip() {
        let r = report();
        let text = r.report_csv();
        assert!(text.starts_with("# policy = half\n"));
        let back = RunReport::parse_report(text.as_bytes()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.win_rate(), r.win_rate());
        assert_eq!(back.moving_average(), r.moving_average());
    }

    #[test]
    fn tampered_header_is_rejected() {
        let text = report().report_csv().replace("# wins = 4", "# wins = 5");
        assert!(RunReport::parse_report(text.as_bytes()).is_err());
    }

    #[test]
    fn summary_round_trip() {
        let rows = vec![SummaryRow::of(&report())];
        let mut buf = Vec::new();
        write_summary(&mut buf, &rows).unwrap();
        assert_eq!(read_summary(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn empty_report() {
        let r = RunReport::new("max", "ieee14", Phase::Train, SeedStreams::from_master(0));
        assert_eq!(r.win_rate(), 0.0);
        assert!(r.moving_average().is_empty());
        let back = RunReport::parse_report(r.report_csv().as_bytes()).unwrap();
        assert_eq!(back, r);
    }
}
