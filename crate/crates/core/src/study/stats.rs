use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One bin of [`bin_mean`]. `mean` is `None` for empty bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub center: f64,
    pub mean: Option<f64>,
    pub count: usize,
}

/// Index of `x` among `n_bins` equal bins on [0, 1]; 1.0 lands in the last.
pub fn bin_index(x: f64, n_bins: usize) -> usize {
    ((x * n_bins as f64).floor() as usize).min(n_bins - 1)
}

/// Averages `y` over half-open bins `[k/n, (k+1)/n)` of `x`, last bin closed.
pub fn bin_mean(x: &[f64], y: &[f64], n_bins: usize) -> Result<Vec<Bin>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} x values vs {} y values",
            x.len(),
            y.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::param("bins", "need at least one bin"));
    }
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::param("x", format!("{v} is outside [0, 1]")));
    }
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&xi, &yi) in x.iter().zip(y) {
        let k = bin_index(xi, n_bins);
        sums[k] += yi;
        counts[k] += 1;
    }
    let width = 1.0 / n_bins as f64;
    Ok((0..n_bins)
        .map(|k| Bin {
            center: (k as f64 + 0.5) * width,
            mean: (counts[k] > 0).then(|| sums[k] / counts[k] as f64),
            count: counts[k],
        })
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} x values vs {} y values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate(
            "correlation needs at least two samples".into(),
        ));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided confidence levels with tabulated quantiles.
pub const CONFIDENCE_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// Upper two-sided Student-t quantile, e.g. `t_{0.975, df}` for level 0.95.
/// Tabulated up to 200 degrees of freedom, normal quantile beyond.
pub fn t_quantile(level: f64, df: usize) -> Result<f64> {
    let (table, normal) = match level {
        l if (l - 0.90).abs() < 1e-12 => (&T_90, 1.644854),
        l if (l - 0.95).abs() < 1e-12 => (&T_95, 1.959964),
        l if (l - 0.99).abs() < 1e-12 => (&T_99, 2.575829),
        _ => {
            return Err(Error::param(
                "confidence level",
                format!("{level} not one of {CONFIDENCE_LEVELS:?}"),
            ))
        }
    };
    match df {
        0 => Err(Error::param("degrees of freedom", "must be >= 1")),
        1..=200 => Ok(table[df - 1]),
        _ => Ok(normal),
    }
}

/// Mean and half-width `t * s / sqrt(n)` of a `level` confidence interval.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "confidence interval needs n >= 2, got {n}"
        )));
    }
    let m = mean(samples);
    let var = samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((
        m,
        t_quantile(level, n - 1)? * var.sqrt() / (n as f64).sqrt(),
    ))
}

// two-sided upper quantiles t_{(1+level)/2, df} for df = 1..=200
const T_90: [f64; 200] = [
    6.313752, 2.919986, 2.353363, 2.131847, 2.015048, 1.943180, 1.894579, 1.859548, 1.833113,
    1.812461, 1.795885, 1.782288, 1.770933, 1.761310, 1.753050, 1.745884, 1.739607, 1.734064,
    1.729133, 1.724718, 1.720743, 1.717144, 1.713872, 1.710882, 1.708141, 1.705618, 1.703288,
    1.701131, 1.699127, 1.697261, 1.695519, 1.693889, 1.692360, 1.690924, 1.689572, 1.688298,
    1.687094, 1.685954, 1.684875, 1.683851, 1.682878, 1.681952, 1.681071, 1.680230, 1.679427,
    1.678660, 1.677927, 1.677224, 1.676551, 1.675905, 1.675285, 1.674689, 1.674116, 1.673565,
    1.673034, 1.672522, 1.672029, 1.671553, 1.671093, 1.670649, 1.670219, 1.669804, 1.669402,
    1.669013, 1.668636, 1.668271, 1.667916, 1.667572, 1.667239, 1.666914, 1.666600, 1.666294,
    1.665996, 1.665707, 1.665425, 1.665151, 1.664885, 1.664625, 1.664371, 1.664125, 1.663884,
    1.663649, 1.663420, 1.663197, 1.662978, 1.662765, 1.662557, 1.662354, 1.662155, 1.661961,
    1.661771, 1.661585, 1.661404, 1.661226, 1.661052, 1.660881, 1.660715, 1.660551, 1.660391,
    1.660234, 1.660081, 1.659930, 1.659782, 1.659637, 1.659495, 1.659356, 1.659219, 1.659085,
    1.658953, 1.658824, 1.658697, 1.658573, 1.658450, 1.658330, 1.658212, 1.658096, 1.657982,
    1.657870, 1.657759, 1.657651, 1.657544, 1.657439, 1.657336, 1.657235, 1.657135, 1.657037,
    1.656940, 1.656845, 1.656752, 1.656659, 1.656569, 1.656479, 1.656391, 1.656305, 1.656219,
    1.656135, 1.656052, 1.655970, 1.655890, 1.655811, 1.655732, 1.655655, 1.655579, 1.655504,
    1.655430, 1.655357, 1.655285, 1.655215, 1.655145, 1.655076, 1.655007, 1.654940, 1.654874,
    1.654808, 1.654744, 1.654680, 1.654617, 1.654555, 1.654494, 1.654433, 1.654373, 1.654314,
    1.654256, 1.654198, 1.654141, 1.654085, 1.654029, 1.653974, 1.653920, 1.653866, 1.653813,
    1.653761, 1.653709, 1.653658, 1.653607, 1.653557, 1.653508, 1.653459, 1.653411, 1.653363,
    1.653316, 1.653269, 1.653223, 1.653177, 1.653132, 1.653087, 1.653043, 1.652999, 1.652956,
    1.652913, 1.652871, 1.652829, 1.652787, 1.652746, 1.652705, 1.652665, 1.652625, 1.652586,
    1.652547, 1.652508,
];
const T_95: [f64; 200] = [
    12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004, 2.262157,
    2.228139, 2.200985, 2.178813, 2.160369, 2.144787, 2.131450, 2.119905, 2.109816, 2.100922,
    2.093024, 2.085963, 2.079614, 2.073873, 2.068658, 2.063899, 2.059539, 2.055529, 2.051831,
    2.048407, 2.045230, 2.042272, 2.039513, 2.036933, 2.034515, 2.032245, 2.030108, 2.028094,
    2.026192, 2.024394, 2.022691, 2.021075, 2.019541, 2.018082, 2.016692, 2.015368, 2.014103,
    2.012896, 2.011741, 2.010635, 2.009575, 2.008559, 2.007584, 2.006647, 2.005746, 2.004879,
    2.004045, 2.003241, 2.002465, 2.001717, 2.000995, 2.000298, 1.999624, 1.998972, 1.998341,
    1.997730, 1.997138, 1.996564, 1.996008, 1.995469, 1.994945, 1.994437, 1.993943, 1.993464,
    1.992997, 1.992543, 1.992102, 1.991673, 1.991254, 1.990847, 1.990450, 1.990063, 1.989686,
    1.989319, 1.988960, 1.988610, 1.988268, 1.987934, 1.987608, 1.987290, 1.986979, 1.986675,
    1.986377, 1.986086, 1.985802, 1.985523, 1.985251, 1.984984, 1.984723, 1.984467, 1.984217,
    1.983972, 1.983731, 1.983495, 1.983264, 1.983038, 1.982815, 1.982597, 1.982383, 1.982173,
    1.981967, 1.981765, 1.981567, 1.981372, 1.981180, 1.980992, 1.980808, 1.980626, 1.980448,
    1.980272, 1.980100, 1.979930, 1.979764, 1.979600, 1.979439, 1.979280, 1.979124, 1.978971,
    1.978820, 1.978671, 1.978524, 1.978380, 1.978239, 1.978099, 1.977961, 1.977826, 1.977692,
    1.977561, 1.977431, 1.977304, 1.977178, 1.977054, 1.976931, 1.976811, 1.976692, 1.976575,
    1.976460, 1.976346, 1.976233, 1.976122, 1.976013, 1.975905, 1.975799, 1.975694, 1.975590,
    1.975488, 1.975387, 1.975288, 1.975189, 1.975092, 1.974996, 1.974902, 1.974808, 1.974716,
    1.974625, 1.974535, 1.974446, 1.974358, 1.974271, 1.974185, 1.974100, 1.974017, 1.973934,
    1.973852, 1.973771, 1.973691, 1.973612, 1.973534, 1.973457, 1.973381, 1.973305, 1.973231,
    1.973157, 1.973084, 1.973012, 1.972941, 1.972870, 1.972800, 1.972731, 1.972663, 1.972595,
    1.972528, 1.972462, 1.972396, 1.972332, 1.972268, 1.972204, 1.972141, 1.972079, 1.972017,
    1.971957, 1.971896,
];
const T_99: [f64; 200] = [
    63.656741, 9.924843, 5.840909, 4.604095, 4.032143, 3.707428, 3.499483, 3.355387, 3.249836,
    3.169273, 3.105807, 3.054540, 3.012276, 2.976843, 2.946713, 2.920782, 2.898231, 2.878440,
    2.860935, 2.845340, 2.831360, 2.818756, 2.807336, 2.796940, 2.787436, 2.778715, 2.770683,
    2.763262, 2.756386, 2.749996, 2.744042, 2.738481, 2.733277, 2.728394, 2.723806, 2.719485,
    2.715409, 2.711558, 2.707913, 2.704459, 2.701181, 2.698066, 2.695102, 2.692278, 2.689585,
    2.687013, 2.684556, 2.682204, 2.679952, 2.677793, 2.675722, 2.673734, 2.671823, 2.669985,
    2.668216, 2.666512, 2.664870, 2.663287, 2.661759, 2.660283, 2.658857, 2.657479, 2.656145,
    2.654854, 2.653604, 2.652394, 2.651220, 2.650081, 2.648977, 2.647905, 2.646863, 2.645852,
    2.644869, 2.643913, 2.642983, 2.642078, 2.641198, 2.640340, 2.639505, 2.638691, 2.637897,
    2.637123, 2.636369, 2.635632, 2.634914, 2.634212, 2.633527, 2.632858, 2.632204, 2.631565,
    2.630940, 2.630330, 2.629732, 2.629148, 2.628576, 2.628016, 2.627468, 2.626931, 2.626405,
    2.625891, 2.625386, 2.624891, 2.624407, 2.623932, 2.623465, 2.623008, 2.622560, 2.622120,
    2.621688, 2.621265, 2.620849, 2.620440, 2.620039, 2.619645, 2.619258, 2.618878, 2.618504,
    2.618137, 2.617776, 2.617421, 2.617072, 2.616729, 2.616392, 2.616060, 2.615733, 2.615412,
    2.615096, 2.614785, 2.614479, 2.614177, 2.613880, 2.613588, 2.613300, 2.613017, 2.612738,
    2.612463, 2.612192, 2.611925, 2.611662, 2.611403, 2.611147, 2.610895, 2.610647, 2.610402,
    2.610161, 2.609923, 2.609688, 2.609456, 2.609228, 2.609003, 2.608780, 2.608561, 2.608344,
    2.608131, 2.607920, 2.607712, 2.607506, 2.607304, 2.607103, 2.606906, 2.606711, 2.606518,
    2.606328, 2.606140, 2.605954, 2.605770, 2.605589, 2.605410, 2.605233, 2.605058, 2.604886,
    2.604715, 2.604546, 2.604379, 2.604215, 2.604052, 2.603891, 2.603731, 2.603574, 2.603418,
    2.603264, 2.603112, 2.602961, 2.602813, 2.602665, 2.602520, 2.602376, 2.602233, 2.602092,
    2.601952, 2.601814, 2.601678, 2.601543, 2.601409, 2.601276, 2.601145, 2.601016, 2.600887,
    2.600760, 2.600634,
];
