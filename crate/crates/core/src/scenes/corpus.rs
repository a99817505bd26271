use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{degrade, random_spec, Scenario, SceneRanges};
use crate::error::{Error, Result};
use crate::io::{write_sample, DatasetIndex};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    /// Sample counts; train and val are rounded, test takes the rest.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid(format!(
                "split ratios {r:?} must be nonnegative and sum to 1"
            )));
        }
        let train = (n as f64 * self.train).round() as usize;
        let val = ((n as f64 * self.val).round() as usize).min(n - train);
        Ok([train, val, n - train - val])
    }
}

/// Scenario fractions, e.g. `day:0.4,night:0.4,rain:0.2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioMix {
    pub day: f64,
    pub night: f64,
    pub rain: f64,
}

impl Default for ScenarioMix {
    fn default() -> Self {
        ScenarioMix {
            day: 0.4,
            night: 0.4,
            rain: 0.2,
        }
    }
}

impl ScenarioMix {
    fn fractions(&self) -> [(Scenario, f64); 3] {
        [
            (Scenario::Day, self.day),
            (Scenario::Night, self.night),
            (Scenario::Rain, self.rain),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions().map(|(_, v)| v);
        if f.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid(format!(
                "scenario mix {f:?} must be nonnegative and sum to 1"
            )));
        }
        Ok(())
    }

    /// `n` scenario tags in proportion to the mix (largest remainder), in
    /// day, night, rain order.
    pub fn allocate(&self, n: usize) -> Vec<Scenario> {
        let fr = self.fractions();
        let mut counts: Vec<usize> = fr
            .iter()
            .map(|(_, f)| (f * n as f64).floor() as usize)
            .collect();
        let mut order: Vec<usize> = (0..3).collect();
        // Stable sort keeps day before night before rain on equal remainders.
        order.sort_by(|&a, &b| {
            let ra = fr[a].1 * n as f64 - counts[a] as f64;
            let rb = fr[b].1 * n as f64 - counts[b] as f64;
            rb.total_cmp(&ra)
        });
        let mut left = n - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        fr.iter()
            .zip(counts)
            .flat_map(|(&(s, _), c)| std::iter::repeat_n(s, c))
            .collect()
    }
}

impl FromStr for ScenarioMix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut mix = ScenarioMix {
            day: 0.0,
            night: 0.0,
            rain: 0.0,
        };
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (name, frac) = part.split_once(':').ok_or_else(|| {
                Error::invalid(format!("mix entry {part:?} is not name:fraction"))
            })?;
            let f: f64 = frac
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad fraction {frac:?}")))?;
            match name.parse::<Scenario>()? {
                Scenario::Day => mix.day = f,
                Scenario::Night => mix.night = f,
                Scenario::Rain => mix.rain = f,
            }
        }
        mix.validate()?;
        Ok(mix)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusOptions {
    pub n: usize,
    pub ratios: SplitRatios,
    pub master_seed: u64,
    pub mix: ScenarioMix,
    pub ranges: SceneRanges,
}

impl CorpusOptions {
    pub fn new(n: usize, master_seed: u64) -> Self {
        CorpusOptions {
            n,
            ratios: SplitRatios::default(),
            master_seed,
            mix: ScenarioMix::default(),
            ranges: SceneRanges::default(),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scene seed of sample `index`; depends on nothing else, so samples can be
/// produced in any order.
pub fn sample_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index as u64)
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

/// Renders, degrades and writes `n` scenes under `out`. Scenarios are
/// stratified per split following the mix and shuffled with the master
/// seed. Refuses to write into a split directory that is not empty.
pub fn generate_corpus(opts: &CorpusOptions, out: &Path) -> Result<DatasetIndex> {
    if opts.n < 3 {
        return Err(Error::invalid(format!(
            "corpus needs n >= 3, got {}",
            opts.n
        )));
    }
    opts.mix.validate()?;
    let counts = opts.ratios.counts(opts.n)?;
    for split in SPLIT_NAMES {
        let dir = out.join(split);
        if dir.exists()
            && fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .next()
                .is_some()
        {
            return Err(Error::invalid(format!(
                "{} already holds samples",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(splitmix64(opts.master_seed ^ 0x5EED));
    let mut index = 0;
    for (split, &count) in SPLIT_NAMES.iter().zip(&counts) {
        let dir = out.join(split);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut tags = opts.mix.allocate(count);
        tags.shuffle(&mut shuffle_rng);
        for scenario in tags {
            let seed = sample_seed(opts.master_seed, index);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (_, clean) = random_spec(&mut rng, &opts.ranges, scenario, seed)?;
            write_sample(&dir.join(format!("{index:06}")), &degrade(&clean))?;
            index += 1;
        }
    }
    DatasetIndex::load(out)
}
