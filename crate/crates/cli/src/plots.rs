//! gnuplot scripts for the CSV outputs. Data only: nothing here renders.

use std::fmt::Write;

const PREAMBLE: &str = "set datafile separator ','\nset terminal pngcairo size 900,600\n";

/// Nearest-neighbour coupling and peak rise against spacing.
pub fn spacing() -> String {
    format!(
        "{PREAMBLE}set output 'spacing.png'\n\
         set xlabel 'line spacing (nm)'\n\
         set ylabel 'nearest-neighbour coupling'\n\
         set y2label 'max single-source rise (K)'\n\
         set y2tics\n\
         plot 'spacing.csv' every ::1 using ($1*1e9):2 with linespoints title 'TC', \\\n\
         \x20    '' every ::1 using ($1*1e9):3 axes x1y2 with linespoints title 'max dT'\n"
    )
}

/// Reference-column accuracy over cycles, coupled and uncoupled.
pub fn inference(patterns: &[String], reference_column: usize) -> String {
    let mut s = format!(
        "{PREAMBLE}set output 'inference.png'\n\
         set logscale x\n\
         set xlabel 'inference cycles'\n\
         set ylabel 'accuracy, column {reference_column} (%)'\n\
         set key bottom left\n\
         plot "
    );
    let mut first = true;
    for p in patterns {
        for (suffix, style) in [("", "lines"), ("_uncoupled", "lines dashtype 2")] {
            if !first {
                s.push_str(", \\\n     ");
            }
            first = false;
            let _ = write!(
                s,
                "'inference_trace_{p}{suffix}.csv' every ::1 using 1:($2=={reference_column} ? $5 : NaN) with {style} title '{p}{suffix}'"
            );
        }
    }
    s.push('\n');
    s
}

/// Probe temperatures of a transient run.
pub fn probes(names: &[String]) -> String {
    let mut s = format!(
        "{PREAMBLE}set output 'probes.png'\n\
         set xlabel 'time (s)'\n\
         set ylabel 'T (K)'\n\
         plot "
    );
    for (k, name) in names.iter().enumerate() {
        if k > 0 {
            s.push_str(", \\\n     ");
        }
        let _ = write!(s, "'probes.csv' every ::1 using 1:(strcol(2) eq '{name}' ? $3 : NaN) with lines title '{name}'");
    }
    s.push('\n');
    s
}
