//! Scenario files in, report files out.

mod emit;
pub mod report;
pub mod scenario;

pub use report::{format_decimal, parse_report, write_report, Field, Report, ReportError, Section, ToReport};
pub use scenario::{parse_scenario, parse_scenario_str, parse_scenario_text, write_scenario, ParseError, ScenarioError};
