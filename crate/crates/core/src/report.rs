//! Running an analysis by name and rendering the result.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::abstract_sem::AnalyzerConfig;
use crate::clients::{propagate_constants, FlowMap};
use crate::cps::{compute_maps, cps_convert, validate, CpsProgram};
use crate::domain::ValueSet;
use crate::frontend::{self, FrontendError};
use crate::kcfa::kcfa_analyze_with;
use crate::summarize::analyze;

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("invalid CPS: {0}")]
    Invalid(String),
}

/// Source text to a validated CPS program.
pub fn compile(source: &str) -> Result<CpsProgram, CompileError> {
    let prog = cps_convert(&frontend::load(source)?);
    validate(&prog)
        .map_err(|vs| CompileError::Invalid(vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")))?;
    Ok(prog)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisKind {
    Cfa2,
    #[serde(rename = "0cfa")]
    ZeroCfa,
    #[serde(rename = "1cfa")]
    OneCfa,
}

impl AnalysisKind {
    pub const ALL: [AnalysisKind; 3] = [AnalysisKind::ZeroCfa, AnalysisKind::OneCfa, AnalysisKind::Cfa2];

    pub fn name(self) -> &'static str {
        match self {
            AnalysisKind::Cfa2 => "cfa2",
            AnalysisKind::ZeroCfa => "0cfa",
            AnalysisKind::OneCfa => "1cfa",
        }
    }
}

impl fmt::Display for AnalysisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnalysisKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AnalysisKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown analysis `{s}` (expected cfa2, 0cfa or 1cfa)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantRow {
    pub label: u32,
    pub var: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub program: String,
    pub analysis: AnalysisKind,
    pub config: AnalyzerConfig,
    pub visited: usize,
    pub s_refs: usize,
    pub h_refs: usize,
    pub constants: Vec<ConstantRow>,
    pub finals: Vec<String>,
    pub elapsed_ms: f64,
}

/// The outcome of one analysis, before rendering.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub kind: AnalysisKind,
    pub visited: usize,
    pub flows: FlowMap,
    pub finals: ValueSet,
}

pub fn run_analysis(prog: &CpsProgram, kind: AnalysisKind, config: AnalyzerConfig) -> Outcome {
    match kind {
        AnalysisKind::Cfa2 => {
            let a = analyze(prog, config);
            let finals = a.final_value();
            Outcome {
                kind,
                visited: a.visited,
                flows: a.flows,
                finals,
            }
        }
        AnalysisKind::ZeroCfa | AnalysisKind::OneCfa => {
            let k = if kind == AnalysisKind::ZeroCfa { 0 } else { 1 };
            let r = kcfa_analyze_with(prog, k, config.branch_pruning);
            Outcome {
                kind,
                visited: r.visited,
                flows: r.flows,
                finals: r.finals,
            }
        }
    }
}

pub fn report(name: &str, prog: &CpsProgram, kind: AnalysisKind, config: AnalyzerConfig) -> Report {
    let start = Instant::now();
    let out = run_analysis(prog, kind, config);
    let elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
    let maps = compute_maps(prog);
    Report {
        program: name.to_string(),
        analysis: kind,
        config,
        visited: out.visited,
        s_refs: maps.s_refs(),
        h_refs: maps.h_refs(),
        constants: propagate_constants(&out.flows)
            .into_iter()
            .map(|c| ConstantRow {
                label: c.label,
                var: prog.var_name(c.var).to_string(),
                value: c.value.to_string(),
            })
            .collect(),
        finals: out.finals.iter().map(|a| a.to_string()).collect(),
        elapsed_ms,
    }
}

impl Report {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("program    {}\n", self.program));
        s.push_str(&format!("analysis   {}\n", self.analysis));
        s.push_str(&format!("visited    {}\n", self.visited));
        s.push_str(&format!("S? / H?    {} / {}\n", self.s_refs, self.h_refs));
        s.push_str(&format!("finals     {{{}}}\n", self.finals.join(", ")));
        s.push_str(&format!("constants  {}\n", self.constants.len()));
        for c in &self.constants {
            s.push_str(&format!("  {}@{} = {}\n", c.var, c.label, c.value));
        }
        s
    }
}

/// One row of the benchmark table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub program: String,
    pub s_refs: usize,
    pub h_refs: usize,
    /// `(visited, constants)` per analysis, in `AnalysisKind::ALL` order.
    pub results: Vec<(AnalysisKind, usize, usize)>,
    pub elapsed_ms: f64,
}

pub fn bench_row(name: &str, prog: &CpsProgram, config: AnalyzerConfig) -> BenchRow {
    let start = Instant::now();
    let maps = compute_maps(prog);
    let results = AnalysisKind::ALL
        .into_iter()
        .map(|k| {
            let o = run_analysis(prog, k, config);
            (k, o.visited, propagate_constants(&o.flows).len())
        })
        .collect();
    BenchRow {
        program: name.to_string(),
        s_refs: maps.s_refs(),
        h_refs: maps.h_refs(),
        results,
        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
    }
}

pub fn bench_table(rows: &[Result<BenchRow, (String, String)>]) -> String {
    let mut s = format!(
        "{:<14} {:>4} {:>4} {:>9} {:>5} {:>9} {:>5} {:>9} {:>5}\n",
        "program", "S?", "H?", "0cfa vis", "const", "1cfa vis", "const", "cfa2 vis", "const"
    );
    for row in rows {
        match row {
            Ok(r) => {
                s.push_str(&format!("{:<14} {:>4} {:>4}", r.program, r.s_refs, r.h_refs));
                for (_, v, c) in &r.results {
                    s.push_str(&format!(" {v:>9} {c:>5}"));
                }
                s.push('\n');
            }
            Err((name, e)) => s.push_str(&format!("{name:<14} error: {e}\n")),
        }
    }
    s
}
