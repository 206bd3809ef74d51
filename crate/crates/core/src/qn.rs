//! Open multiclass queueing-network model.
//!
//! Every Web Service `k` is replicated over `N_k` identical single-server
//! instances and requests of every class are spread evenly over them. All
//! predictions are made from a [`BaselineSnapshot`] taken at a reference
//! configuration `M`: the products `M_k * D_ck(M)` and `M_k * U_k(M)` do not
//! depend on the configuration, so demands, utilizations and response times
//! at any other configuration follow from them.
//!
//! Indices are 0-based in the API. Error messages and reports name stations
//! and classes 1-based.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, QnError, Result};

/// Absolute-or-relative tolerance used for every equality-style check.
pub const TOLERANCE: f64 = 1e-9;

/// `|a - b| <= TOLERANCE * max(1, |a|, |b|)`.
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOLERANCE * 1f64.max(a.abs()).max(b.abs())
}

fn check_nonneg(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        None => Ok(()),
        Some(i) => Err(QnError::InvalidInput(format!(
            "{what}[{i}] = {} must be finite and >= 0",
            values[i]
        ))),
    }
}

/// Number of instances allocated to each station.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Configuration(Vec<u32>);

impl Configuration {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(QnError::InvalidInput("configuration is empty".into()));
        }
        if let Some(k) = counts.iter().position(|&n| n == 0) {
            return Err(QnError::InvalidInput(format!(
                "station {} has zero instances; at least one is required",
                k + 1
            )));
        }
        Ok(Configuration(counts))
    }

    /// One instance per station.
    pub fn ones(stations: usize) -> Self {
        Configuration(vec![1; stations])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, station: usize) -> u32 {
        self.0[station]
    }

    /// Total number of instances, `S = sum_k N_k`.
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&n| u64::from(n)).sum()
    }

    /// `N + 1_k`.
    pub fn incremented(&self, station: usize) -> Self {
        let mut counts = self.0.clone();
        counts[station] += 1;
        Configuration(counts)
    }

    /// `N - 1_k`, or `None` when that would leave the station empty.
    pub fn decremented(&self, station: usize) -> Option<Self> {
        if self.0[station] <= 1 {
            return None;
        }
        let mut counts = self.0.clone();
        counts[station] -= 1;
        Some(Configuration(counts))
    }

    pub fn componentwise_max(&self, other: &Configuration) -> Result<Self> {
        check_len("configuration length", self.len(), other.len())?;
        Ok(Configuration(
            self.0.iter().zip(&other.0).map(|(a, b)| *a.max(b)).collect(),
        ))
    }

    /// `self <= other` componentwise.
    pub fn is_dominated_by(&self, other: &Configuration) -> bool {
        self.len() == other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

impl TryFrom<Vec<u32>> for Configuration {
    type Error = QnError;

    fn try_from(counts: Vec<u32>) -> Result<Self> {
        Configuration::new(counts)
    }
}

impl From<Configuration> for Vec<u32> {
    fn from(config: Configuration) -> Self {
        config.0
    }
}

/// Per-class arrival rates (workflows per unit time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ArrivalRates(Vec<f64>);

impl ArrivalRates {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(QnError::InvalidInput("arrival rates are empty".into()));
        }
        check_nonneg("rate", &rates)?;
        Ok(ArrivalRates(rates))
    }

    pub fn zeros(classes: usize) -> Self {
        ArrivalRates(vec![0.0; classes])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl TryFrom<Vec<f64>> for ArrivalRates {
    type Error = QnError;

    fn try_from(rates: Vec<f64>) -> Result<Self> {
        ArrivalRates::new(rates)
    }
}

impl From<ArrivalRates> for Vec<f64> {
    fn from(rates: ArrivalRates) -> Self {
        rates.0
    }
}

/// Class-by-station service demands on a single instance. A zero entry means
/// the class never visits that station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DemandMatrix {
    rows: Vec<Vec<f64>>,
}

impl DemandMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let stations = rows.first().map_or(0, Vec::len);
        if stations == 0 {
            return Err(QnError::InvalidInput(
                "demand matrix needs at least one class and one station".into(),
            ));
        }
        for row in &rows {
            check_len("demand row length", stations, row.len())?;
            check_nonneg("demand", row)?;
        }
        Ok(DemandMatrix { rows })
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn stations(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, class: usize, station: usize) -> f64 {
        self.rows[class][station]
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.rows[class]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `sum_k D_ck` for every class.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for DemandMatrix {
    type Error = QnError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        DemandMatrix::new(rows)
    }
}

impl From<DemandMatrix> for Vec<Vec<f64>> {
    fn from(matrix: DemandMatrix) -> Self {
        matrix.rows
    }
}

/// Per-instance busy fraction of every station. Values `>= 1` are
/// representable and denote overload.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilizationVector(Vec<f64>);

impl UtilizationVector {
    pub fn new(utilizations: Vec<f64>) -> Result<Self> {
        check_nonneg("utilization", &utilizations)?;
        Ok(UtilizationVector(utilizations))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Stations whose instances are saturated (`U_k >= 1`).
    pub fn overloaded(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&k| self.0[k] >= 1.0).collect()
    }
}

/// Predicted response times.
///
/// `per_class_station[c][k]` is the contribution of station `k` to the
/// end-to-end response of class `c`, i.e. `N_k * R_ck(N)`: the time a class-`c`
/// workflow spends at station `k` summed over the station's instances. The
/// row sums are `per_class`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTimes {
    pub per_class: Vec<f64>,
    pub per_class_station: Vec<Vec<f64>>,
}

impl ResponseTimes {
    /// Per-instance residence time `R_ck(N)`.
    pub fn residence(&self, config: &Configuration, class: usize, station: usize) -> f64 {
        self.per_class_station[class][station] / f64::from(config.get(station))
    }
}

/// `U_k = sum_c lambda_c * D_ck`. Overloaded values are returned as-is.
pub fn utilization(rates: &ArrivalRates, demands: &DemandMatrix) -> Result<UtilizationVector> {
    check_len("rates vs demand classes", demands.classes(), rates.len())?;
    let utilizations = (0..demands.stations())
        .map(|k| {
            rates
                .as_slice()
                .iter()
                .zip(demands.rows())
                .map(|(lambda, row)| lambda * row[k])
                .sum()
        })
        .collect();
    Ok(UtilizationVector(utilizations))
}

/// Residence time at one instance, `D / (1 - U)`.
pub fn residence_time(demand: f64, utilization: f64) -> Result<f64> {
    if !(demand.is_finite() && demand >= 0.0) || !(utilization.is_finite() && utilization >= 0.0)
    {
        return Err(QnError::InvalidInput(format!(
            "residence_time({demand}, {utilization}): arguments must be finite and >= 0"
        )));
    }
    if utilization >= 1.0 {
        return Err(QnError::overloaded(Vec::new()));
    }
    Ok(demand / (1.0 - utilization))
}

/// End-to-end response, `R_c = sum_k N_k * R_ck`.
pub fn response_time(config: &Configuration, per_station_residence: &[f64]) -> Result<f64> {
    check_len("residence row length", config.len(), per_station_residence.len())?;
    Ok(config
        .counts()
        .iter()
        .zip(per_station_residence)
        .map(|(&n, r)| f64::from(n) * r)
        .sum())
}

/// Recovers a service demand from a measured residence time and utilization,
/// `D = R * (1 - U)`.
pub fn estimate_demand(residence_measured: f64, utilization_measured: f64) -> Result<f64> {
    if !(residence_measured.is_finite() && residence_measured >= 0.0)
        || !(utilization_measured.is_finite() && utilization_measured >= 0.0)
    {
        return Err(QnError::InvalidInput(format!(
            "estimate_demand({residence_measured}, {utilization_measured}): arguments must be finite and >= 0"
        )));
    }
    if utilization_measured >= 1.0 {
        return Err(QnError::overloaded(Vec::new()));
    }
    Ok(residence_measured * (1.0 - utilization_measured))
}

/// Measured or derived system state at a reference configuration, from which
/// every prediction is made.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSnapshot {
    ref_config: Configuration,
    rates: ArrivalRates,
    demands_ref: DemandMatrix,
    utilizations_ref: UtilizationVector,
}

impl BaselineSnapshot {
    /// Builds a snapshot, deriving utilizations from rates and demands.
    pub fn new(
        ref_config: Configuration,
        rates: ArrivalRates,
        demands_ref: DemandMatrix,
    ) -> Result<Self> {
        check_len(
            "reference configuration vs demand stations",
            demands_ref.stations(),
            ref_config.len(),
        )?;
        let utilizations_ref = utilization(&rates, &demands_ref)?;
        Ok(BaselineSnapshot {
            ref_config,
            rates,
            demands_ref,
            utilizations_ref,
        })
    }

    /// Builds a snapshot from independently measured utilizations, which must
    /// agree with rates and demands within [`TOLERANCE`].
    pub fn with_utilizations(
        ref_config: Configuration,
        rates: ArrivalRates,
        demands_ref: DemandMatrix,
        utilizations_ref: UtilizationVector,
    ) -> Result<Self> {
        let snapshot = Self::new(ref_config, rates, demands_ref)?;
        check_len(
            "utilizations vs stations",
            snapshot.stations(),
            utilizations_ref.len(),
        )?;
        let derived = snapshot.utilizations_ref.as_slice();
        for (k, (&given, &expected)) in utilizations_ref.as_slice().iter().zip(derived).enumerate()
        {
            if !approx_eq(given, expected) {
                return Err(QnError::InvalidInput(format!(
                    "utilization of station {} is {given}, but rates and demands imply {expected}",
                    k + 1
                )));
            }
        }
        Ok(BaselineSnapshot {
            utilizations_ref,
            ..snapshot
        })
    }

    pub fn ref_config(&self) -> &Configuration {
        &self.ref_config
    }

    pub fn rates(&self) -> &ArrivalRates {
        &self.rates
    }

    pub fn demands_ref(&self) -> &DemandMatrix {
        &self.demands_ref
    }

    pub fn utilizations_ref(&self) -> &UtilizationVector {
        &self.utilizations_ref
    }

    pub fn classes(&self) -> usize {
        self.demands_ref.classes()
    }

    pub fn stations(&self) -> usize {
        self.demands_ref.stations()
    }

    /// Same demands with different arrival rates; utilizations are re-derived.
    pub fn with_rates(&self, rates: ArrivalRates) -> Result<Self> {
        Self::new(self.ref_config.clone(), rates, self.demands_ref.clone())
    }

    /// Total class demand over all instances of a station, `M_k * D_ck(M)`.
    /// Invariant under rescaling; it is also the demand of a single visit when
    /// a request is served entirely by one instance.
    pub fn total_demand(&self, class: usize, station: usize) -> f64 {
        f64::from(self.ref_config.get(station)) * self.demands_ref.get(class, station)
    }

    /// `sum_k M_k * D_ck(M)`: the response time class `c` approaches as every
    /// station grows without bound.
    pub fn demand_floor(&self, class: usize) -> f64 {
        (0..self.stations())
            .map(|k| self.total_demand(class, k))
            .sum()
    }

    /// Stations where `target` does not stay strictly above the capacity floor.
    pub fn infeasible_stations(&self, target: &Configuration) -> Vec<usize> {
        let floor = capacity_floor(self);
        (0..self.stations())
            .filter(|&k| f64::from(target.get(k)) <= floor[k])
            .collect()
    }

    fn check_target(&self, target: &Configuration) -> Result<()> {
        check_len(
            "target configuration vs stations",
            self.stations(),
            target.len(),
        )
    }
}

/// Re-references a snapshot at `target`:
/// `D_ck(N) = (M_k / N_k) D_ck(M)` and `U_k(N) = (M_k / N_k) U_k(M)`.
pub fn rescale_snapshot(
    base: &BaselineSnapshot,
    target: &Configuration,
) -> Result<BaselineSnapshot> {
    base.check_target(target)?;
    let ratio: Vec<f64> = (0..base.stations())
        .map(|k| f64::from(base.ref_config.get(k)) / f64::from(target.get(k)))
        .collect();
    let demands = base
        .demands_ref
        .rows()
        .iter()
        .map(|row| row.iter().zip(&ratio).map(|(d, r)| r * d).collect())
        .collect();
    let utilizations = base
        .utilizations_ref
        .as_slice()
        .iter()
        .zip(&ratio)
        .map(|(u, r)| r * u)
        .collect();
    Ok(BaselineSnapshot {
        ref_config: target.clone(),
        rates: base.rates.clone(),
        demands_ref: DemandMatrix { rows: demands },
        utilizations_ref: UtilizationVector(utilizations),
    })
}

/// Contribution of one station to a class response at (possibly fractional)
/// instance count `n`: `D(M) * M * n / (n - U(M) * M)`.
///
/// Only meaningful for `n > U(M) * M`.
pub fn response_term(demand_ref: f64, util_ref: f64, reference: f64, n: f64) -> f64 {
    if demand_ref == 0.0 {
        return 0.0;
    }
    demand_ref * reference * n / (n - util_ref * reference)
}

/// Closed-form partial derivative of [`response_term`] with respect to `n`:
/// `-M^2 U(M) D(M) / (n - U(M) M)^2`.
pub fn response_slope(demand_ref: f64, util_ref: f64, reference: f64, n: f64) -> f64 {
    let gap = n - util_ref * reference;
    -reference * reference * util_ref * demand_ref / (gap * gap)
}

/// Predicted response time of every class at `target`.
pub fn predict_response(base: &BaselineSnapshot, target: &Configuration) -> Result<ResponseTimes> {
    base.check_target(target)?;
    let bad = base.infeasible_stations(target);
    if !bad.is_empty() {
        return Err(QnError::infeasible(bad));
    }
    let utils = base.utilizations_ref.as_slice();
    let per_class_station: Vec<Vec<f64>> = base
        .demands_ref
        .rows()
        .iter()
        .map(|row| {
            (0..base.stations())
                .map(|k| {
                    response_term(
                        row[k],
                        utils[k],
                        f64::from(base.ref_config.get(k)),
                        f64::from(target.get(k)),
                    )
                })
                .collect()
        })
        .collect();
    let per_class = per_class_station.iter().map(|r| r.iter().sum()).collect();
    Ok(ResponseTimes {
        per_class,
        per_class_station,
    })
}

/// Predicted response time of a single class at `target`.
pub fn predict_class_response(
    base: &BaselineSnapshot,
    class: usize,
    target: &Configuration,
) -> Result<f64> {
    base.check_target(target)?;
    let bad = base.infeasible_stations(target);
    if !bad.is_empty() {
        return Err(QnError::infeasible(bad));
    }
    let utils = base.utilizations_ref.as_slice();
    let row = base.demands_ref.row(class);
    Ok((0..base.stations())
        .map(|k| {
            response_term(
                row[k],
                utils[k],
                f64::from(base.ref_config.get(k)),
                f64::from(target.get(k)),
            )
        })
        .sum())
}

/// Real-valued lower bound on instance counts, `Nmin_k = M_k * U_k(M)`.
pub fn capacity_floor(base: &BaselineSnapshot) -> Vec<f64> {
    base.utilizations_ref
        .as_slice()
        .iter()
        .zip(base.ref_config.counts())
        .map(|(u, &m)| f64::from(m) * u)
        .collect()
}

/// Smallest configuration strictly above the capacity floor.
pub fn min_feasible_config(base: &BaselineSnapshot) -> Configuration {
    Configuration(
        capacity_floor(base)
            .into_iter()
            .map(|floor| (floor.floor() as u32).saturating_add(1).max(1))
            .collect(),
    )
}
