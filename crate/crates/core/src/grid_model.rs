//! MATPOWER case parsing and the DC measurement Jacobian.
//!
//! The observation model is the standard DC approximation: unit voltage
//! magnitudes, flows proportional to angle differences over branch
//! reactance. Measurements are active-power injections at every bus
//! followed by active-power flows on every in-service branch, so
//! `m = #buses + #in-service branches`. The state vector holds voltage
//! angles at all non-slack buses (`n = #buses - 1`).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// MATPOWER bus type codes: 1 = PQ, 2 = PV, 3 = slack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone)]
pub struct Bus {
    pub id: usize,
    pub bus_type: BusType,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub reactance_pu: f64,
    /// Off-nominal turns ratio; 1.0 for a plain line.
    pub tap_ratio: f64,
    pub in_service: bool,
}

/// Parsed topology of a power network: buses, branches, MVA base.
#[derive(Debug, Clone)]
pub struct GridCase {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub base_mva: f64,
}

impl GridCase {
    pub fn slack_bus(&self) -> usize {
        self.buses
            .iter()
            .find(|b| b.bus_type == BusType::Slack)
            .map(|b| b.id)
            .expect("validated case has a slack bus")
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| b.in_service)
    }
}

/// Tags a Jacobian row with the physical measurement it represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementLabel {
    /// Net active-power injection at a bus.
    Injection(usize),
    /// Active-power flow on a branch, oriented from -> to.
    Flow(usize, usize),
}

impl std::fmt::Display for MeasurementLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeasurementLabel::Injection(bus) => write!(f, "inj:{bus}"),
            MeasurementLabel::Flow(from, to) => write!(f, "flow:{from}->{to}"),
        }
    }
}

/// Linearized observation model `y = Hx + z` with white sensor noise.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    /// m x n DC Jacobian.
    pub jacobian: DMatrix<f64>,
    /// Sensor noise variance sigma^2, per-unit power squared.
    pub noise_variance: f64,
    /// Row tags, injections first, then flows in branch order.
    pub labels: Vec<MeasurementLabel>,
    /// Bus ids whose voltage angle is a state variable (slack excluded).
    pub state_labels: Vec<usize>,
}

impl MeasurementModel {
    pub fn num_measurements(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn num_states(&self) -> usize {
        self.jacobian.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Bus,
    Branch,
    Other,
}

/// Parses a MATPOWER plain-text case.
///
/// Only the `baseMVA`, `bus`, and `branch` blocks are read. Rows are
/// whitespace-separated numeric tokens terminated by `;`, with `%`
/// starting a comment. Out-of-service branches are retained but flagged.
pub fn parse_case(text: &str) -> Result<GridCase> {
    let mut base_mva: Option<f64> = None;
    let mut bus_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut branch_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut saw_bus_block = false;
    let mut saw_branch_block = false;

    let mut current: Option<Block> = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = match raw.find('%') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }

        if let Some(block) = current {
            if line.starts_with(']') {
                current = None;
                continue;
            }
            let row = parse_row(line, lineno)?;
            match block {
                Block::Bus => bus_rows.push((lineno, row)),
                Block::Branch => branch_rows.push((lineno, row)),
                Block::Other => {}
            }
            continue;
        }

        if let Some(eq) = line.find('=') {
            let lhs = line[..eq].trim();
            let rhs = line[eq + 1..].trim();
            if lhs.ends_with("baseMVA") {
                let value = rhs.trim_end_matches(';').trim();
                let mva: f64 = value
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("invalid baseMVA `{value}`")))?;
                if mva <= 0.0 {
                    return Err(Error::Model(format!("baseMVA must be positive, got {mva}")));
                }
                base_mva = Some(mva);
            } else if rhs.starts_with('[') {
                let block = if lhs.ends_with(".bus") || lhs == "bus" {
                    saw_bus_block = true;
                    Block::Bus
                } else if lhs.ends_with(".branch") || lhs == "branch" {
                    saw_branch_block = true;
                    Block::Branch
                } else {
                    Block::Other
                };
                // data may start on the same line as the opening bracket
                let rest = rhs[1..].trim();
                if rest.starts_with(']') {
                    continue;
                }
                if !rest.is_empty() {
                    let row = parse_row(rest, lineno)?;
                    match block {
                        Block::Bus => bus_rows.push((lineno, row)),
                        Block::Branch => branch_rows.push((lineno, row)),
                        Block::Other => {}
                    }
                }
                current = Some(block);
            }
        }
        // other statements (version strings, function header) are ignored
    }

    if !saw_bus_block {
        return Err(Error::parse(last_line, "missing bus block"));
    }
    if !saw_branch_block {
        return Err(Error::parse(last_line, "missing branch block"));
    }
    let base_mva =
        base_mva.ok_or_else(|| Error::parse(last_line, "missing baseMVA declaration"))?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for (lineno, row) in &bus_rows {
        if row.len() < 2 {
            return Err(Error::parse(*lineno, "bus row needs at least 2 columns"));
        }
        let id = row[0] as usize;
        if row[0].fract() != 0.0 || row[0] < 1.0 {
            return Err(Error::parse(*lineno, format!("invalid bus id {}", row[0])));
        }
        let bus_type = match row[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            other => {
                return Err(Error::Model(format!(
                    "bus {id}: unsupported bus type {other}"
                )))
            }
        };
        buses.push(Bus { id, bus_type });
    }

    let mut seen = HashMap::new();
    for bus in &buses {
        if seen.insert(bus.id, ()).is_some() {
            return Err(Error::Model(format!("duplicate bus id {}", bus.id)));
        }
    }
    let slack_count = buses
        .iter()
        .filter(|b| b.bus_type == BusType::Slack)
        .count();
    if slack_count != 1 {
        return Err(Error::Model(format!(
            "expected exactly one slack bus, found {slack_count}"
        )));
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (lineno, row) in &branch_rows {
        if row.len() < 11 {
            return Err(Error::parse(
                *lineno,
                "branch row needs at least 11 columns",
            ));
        }
        let from_bus = row[0] as usize;
        let to_bus = row[1] as usize;
        let reactance_pu = row[3];
        let ratio = row[8];
        let shift_deg = row[9];
        let in_service = row[10] != 0.0;
        if !seen.contains_key(&from_bus) || !seen.contains_key(&to_bus) {
            return Err(Error::Model(format!(
                "branch {from_bus}-{to_bus} references an unknown bus"
            )));
        }
        if in_service && reactance_pu <= 0.0 {
            return Err(Error::Model(format!(
                "in-service branch {from_bus}-{to_bus} has non-positive reactance {reactance_pu}"
            )));
        }
        if ratio < 0.0 {
            return Err(Error::Model(format!(
                "branch {from_bus}-{to_bus} has negative tap ratio {ratio}"
            )));
        }
        if in_service && shift_deg != 0.0 {
            return Err(Error::Model(format!(
                "branch {from_bus}-{to_bus} has a phase-shift angle; phase shifters are unsupported"
            )));
        }
        branches.push(Branch {
            from_bus,
            to_bus,
            reactance_pu,
            // MATPOWER encodes "no transformer" as ratio 0
            tap_ratio: if ratio == 0.0 { 1.0 } else { ratio },
            in_service,
        });
    }

    Ok(GridCase {
        buses,
        branches,
        base_mva,
    })
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    let body = line.strip_suffix(';').ok_or_else(|| {
        Error::parse(lineno, "data row not terminated by ';'")
    })?;
    body.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(lineno, format!("invalid numeric token `{tok}`")))
        })
        .collect()
}

/// Builds the DC Jacobian for `case`.
///
/// Rows are ordered as injections at all buses (bus order) followed by
/// flows on all in-service branches (branch order). The flow on branch
/// (f, t) is `(theta_f - theta_t) / (x * tap)`; each injection row is the
/// signed sum of the flow rows of branches incident to that bus. The
/// slack-bus angle column is deleted.
pub fn build_jacobian(case: &GridCase, noise_variance: f64) -> Result<MeasurementModel> {
    if noise_variance <= 0.0 {
        return Err(Error::Domain(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }

    let slack = case.slack_bus();
    let state_labels: Vec<usize> = case
        .buses
        .iter()
        .filter(|b| b.id != slack)
        .map(|b| b.id)
        .collect();
    let col_of: HashMap<usize, usize> = state_labels
        .iter()
        .enumerate()
        .map(|(col, &id)| (id, col))
        .collect();
    let bus_pos: HashMap<usize, usize> = case
        .buses
        .iter()
        .enumerate()
        .map(|(pos, b)| (b.id, pos))
        .collect();

    check_connected(case, slack)?;

    let n_bus = case.buses.len();
    let n = state_labels.len();
    let flows: Vec<(&Branch, DVector<f64>)> = case
        .in_service_branches()
        .map(|br| {
            let susceptance = 1.0 / (br.reactance_pu * br.tap_ratio);
            let mut row = DVector::zeros(n);
            if let Some(&col) = col_of.get(&br.from_bus) {
                row[col] += susceptance;
            }
            if let Some(&col) = col_of.get(&br.to_bus) {
                row[col] -= susceptance;
            }
            (br, row)
        })
        .collect();

    let mut injections = vec![DVector::<f64>::zeros(n); n_bus];
    for (br, row) in &flows {
        injections[bus_pos[&br.from_bus]] += row;
        injections[bus_pos[&br.to_bus]] -= row;
    }

    let m = n_bus + flows.len();
    let mut jacobian = DMatrix::zeros(m, n);
    let mut labels = Vec::with_capacity(m);
    for (pos, bus) in case.buses.iter().enumerate() {
        jacobian.row_mut(pos).copy_from(&injections[pos].transpose());
        labels.push(MeasurementLabel::Injection(bus.id));
    }
    for (offset, (br, row)) in flows.iter().enumerate() {
        jacobian
            .row_mut(n_bus + offset)
            .copy_from(&row.transpose());
        labels.push(MeasurementLabel::Flow(br.from_bus, br.to_bus));
    }

    Ok(MeasurementModel {
        jacobian,
        noise_variance,
        labels,
        state_labels,
    })
}

fn check_connected(case: &GridCase, slack: usize) -> Result<()> {
    let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
    for br in case.in_service_branches() {
        adjacency.entry(br.from_bus).or_default().push(br.to_bus);
        adjacency.entry(br.to_bus).or_default().push(br.from_bus);
    }
    let mut visited = std::collections::HashSet::new();
    let mut stack = vec![slack];
    while let Some(bus) = stack.pop() {
        if !visited.insert(bus) {
            continue;
        }
        if let Some(neighbors) = adjacency.get(&bus) {
            stack.extend(neighbors.iter().copied());
        }
    }
    if visited.len() != case.buses.len() {
        return Err(Error::Model(format!(
            "network is disconnected: {} of {} buses reachable from the slack; states unobservable",
            visited.len(),
            case.buses.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "\
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 132 1 1.06 0.94;
    2 1 10 2 0 0 1 1 0 132 1 1.06 0.94;
];
mpc.branch = [
    1 2 0.0 0.5 0.0 0 0 0 0 0 1 -360 360;
];
";

    pub(crate) fn two_bus_case() -> GridCase {
        parse_case(TWO_BUS).unwrap()
    }

    #[test]
    fn parses_minimal_two_bus_case() {
        let case = two_bus_case();
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.base_mva, 100.0);
        assert_eq!(case.slack_bus(), 1);
    }

    #[test]
    fn parses_ieee30_case() {
        let text = include_str!("../cases/ieee30.m");
        let case = parse_case(text).unwrap();
        assert_eq!(case.buses.len(), 30);
        assert_eq!(case.branches.len(), 41);
        assert!(case.branches.iter().all(|b| b.in_service));
        // four classic transformer taps
        let taps: Vec<f64> = case
            .branches
            .iter()
            .filter(|b| b.tap_ratio != 1.0)
            .map(|b| b.tap_ratio)
            .collect();
        assert_eq!(taps, vec![0.978, 0.969, 0.932, 0.968]);
    }

    #[test]
    fn missing_branch_block_is_a_parse_error() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0 0 0 0 1 1 0 132 1 1.06 0.94;\n];\n";
        match parse_case(text) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("branch")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_token_reports_line_number() {
        let text = TWO_BUS.replace("1 2 0.0 0.5", "1 2 0.0 oops");
        match parse_case(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 8);
                assert!(message.contains("oops"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn zero_reactance_in_service_rejected() {
        let text = TWO_BUS.replace("1 2 0.0 0.5", "1 2 0.0 0.0");
        assert!(matches!(parse_case(&text), Err(Error::Model(_))));
    }

    #[test]
    fn zero_reactance_out_of_service_allowed() {
        let text = TWO_BUS
            .replace(
                "mpc.branch = [",
                "mpc.branch = [\n    1 2 0.0 0.0 0.0 0 0 0 0 0 0 -360 360;",
            );
        let case = parse_case(&text).unwrap();
        assert_eq!(case.branches.len(), 2);
        assert!(!case.branches[0].in_service);
    }

    #[test]
    fn slack_count_must_be_one() {
        let none = TWO_BUS.replace("1 3 0 0", "1 1 0 0");
        assert!(matches!(parse_case(&none), Err(Error::Model(_))));
        let two = TWO_BUS.replace("2 1 10 2", "2 3 10 2");
        assert!(matches!(parse_case(&two), Err(Error::Model(_))));
    }

    #[test]
    fn unknown_endpoint_rejected() {
        let text = TWO_BUS.replace("1 2 0.0 0.5", "1 7 0.0 0.5");
        assert!(matches!(parse_case(&text), Err(Error::Model(_))));
    }

    #[test]
    fn phase_shifter_rejected() {
        let text = TWO_BUS.replace(
            "1 2 0.0 0.5 0.0 0 0 0 0 0 1",
            "1 2 0.0 0.5 0.0 0 0 0 0 30 1",
        );
        assert!(matches!(parse_case(&text), Err(Error::Model(_))));
    }

    #[test]
    fn two_bus_jacobian_matches_hand_evaluation() {
        let case = two_bus_case();
        let meas = build_jacobian(&case, 1.0).unwrap();
        assert_eq!(meas.num_measurements(), 3);
        assert_eq!(meas.num_states(), 1);
        // rows: inj bus 1, inj bus 2, flow 1->2; d/d(theta_2) of (0 - theta_2)/0.5
        assert_eq!(meas.jacobian[(0, 0)], -2.0);
        assert_eq!(meas.jacobian[(1, 0)], 2.0);
        assert_eq!(meas.jacobian[(2, 0)], -2.0);
        assert_eq!(meas.state_labels, vec![2]);
        assert_eq!(
            meas.labels,
            vec![
                MeasurementLabel::Injection(1),
                MeasurementLabel::Injection(2),
                MeasurementLabel::Flow(1, 2),
            ]
        );
    }

    #[test]
    fn ieee30_dimensions() {
        let case = parse_case(include_str!("../cases/ieee30.m")).unwrap();
        let meas = build_jacobian(&case, 1e-3).unwrap();
        assert_eq!(meas.num_measurements(), 71);
        assert_eq!(meas.num_states(), 29);
    }

    #[test]
    fn injection_rows_are_signed_sums_of_incident_flows() {
        let case = parse_case(include_str!("../cases/ieee30.m")).unwrap();
        let meas = build_jacobian(&case, 1e-3).unwrap();
        let n_bus = case.buses.len();
        for (pos, bus) in case.buses.iter().enumerate() {
            let mut expected = DVector::zeros(meas.num_states());
            for (offset, br) in case.in_service_branches().enumerate() {
                let row = meas.jacobian.row(n_bus + offset);
                if br.from_bus == bus.id {
                    expected += row.transpose();
                } else if br.to_bus == bus.id {
                    expected -= row.transpose();
                }
            }
            assert_eq!(
                meas.jacobian.row(pos).transpose(),
                expected,
                "injection row for bus {}",
                bus.id
            );
        }
    }

    #[test]
    fn flow_rows_negate_when_endpoints_swap() {
        let case = two_bus_case();
        let swapped = {
            let mut c = case.clone();
            let br = &mut c.branches[0];
            std::mem::swap(&mut br.from_bus, &mut br.to_bus);
            c
        };
        let a = build_jacobian(&case, 1.0).unwrap();
        let b = build_jacobian(&swapped, 1.0).unwrap();
        assert_eq!(a.jacobian.row(2).transpose(), -b.jacobian.row(2).transpose());

        // same on a branch with two non-slack endpoints
        let case = parse_case(include_str!("../cases/ieee30.m")).unwrap();
        let n_bus = case.buses.len();
        for branch_idx in [0, 20, 40] {
            let mut swapped = case.clone();
            let br = &mut swapped.branches[branch_idx];
            std::mem::swap(&mut br.from_bus, &mut br.to_bus);
            let a = build_jacobian(&case, 1.0).unwrap();
            let b = build_jacobian(&swapped, 1.0).unwrap();
            let row = n_bus + branch_idx;
            assert_eq!(
                a.jacobian.row(row).transpose(),
                -b.jacobian.row(row).transpose(),
                "branch {branch_idx}"
            );
        }
    }

    #[test]
    fn injection_rows_balance_to_zero() {
        let case = parse_case(include_str!("../cases/ieee30.m")).unwrap();
        let meas = build_jacobian(&case, 1e-3).unwrap();
        let n_bus = case.buses.len();
        let sum = (0..n_bus)
            .map(|r| meas.jacobian.row(r).transpose())
            .fold(DVector::zeros(meas.num_states()), |acc, row| acc + row);
        assert!(sum.amax() < 1e-9, "lossless DC power balance violated");
    }

    #[test]
    fn ieee30_jacobian_has_full_column_rank() {
        let case = parse_case(include_str!("../cases/ieee30.m")).unwrap();
        let meas = build_jacobian(&case, 1e-3).unwrap();
        let svd = meas.jacobian.clone().svd(false, false);
        let max = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-9 * max)
            .count();
        assert_eq!(rank, meas.num_states());
    }

    #[test]
    fn out_of_service_branch_excluded_from_rows_and_sums() {
        // triangle with branch 2-3 out: only two flow rows, and the
        // injections at buses 2 and 3 see a single branch each
        let text = "\
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 132 1 1.06 0.94;
    2 1 0 0 0 0 1 1 0 132 1 1.06 0.94;
    3 1 0 0 0 0 1 1 0 132 1 1.06 0.94;
];
mpc.branch = [
    1 2 0.0 0.5 0.0 0 0 0 0 0 1 -360 360;
    2 3 0.0 0.2 0.0 0 0 0 0 0 0 -360 360;
    1 3 0.0 0.4 0.0 0 0 0 0 0 1 -360 360;
];
";
        let case = parse_case(text).unwrap();
        let meas = build_jacobian(&case, 1.0).unwrap();
        assert_eq!(meas.num_measurements(), 5); // 3 injections + 2 flows
        assert_eq!(
            meas.labels[3..],
            [MeasurementLabel::Flow(1, 2), MeasurementLabel::Flow(1, 3)]
        );
        // injection at bus 2 is exactly the negated flow 1->2
        assert_eq!(
            meas.jacobian.row(1).transpose(),
            -meas.jacobian.row(3).transpose()
        );
        // injection at bus 3 is exactly the negated flow 1->3
        assert_eq!(
            meas.jacobian.row(2).transpose(),
            -meas.jacobian.row(4).transpose()
        );
    }

    #[test]
    fn disconnected_network_rejected() {
        let text = "\
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 132 1 1.06 0.94;
    2 1 0 0 0 0 1 1 0 132 1 1.06 0.94;
    3 1 0 0 0 0 1 1 0 132 1 1.06 0.94;
];
mpc.branch = [
    1 2 0.0 0.5 0.0 0 0 0 0 0 1 -360 360;
    2 3 0.0 0.5 0.0 0 0 0 0 0 0 -360 360;
];
";
        let case = parse_case(text).unwrap();
        assert!(matches!(
            build_jacobian(&case, 1.0),
            Err(Error::Model(_))
        ));
    }
}
