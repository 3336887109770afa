use std::fmt::Write as _;

use super::CaseData;
use crate::grid::{ControlMode, LccLink};

fn row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    out.push('\t');
    let mut first = true;
    for v in values {
        if !first {
            out.push('\t');
        }
        first = false;
        write_num(out, v);
    }
    out.push_str(";\n");
}

fn write_num(out: &mut String, v: f64) {
    if v == f64::INFINITY {
        out.push_str("Inf");
    } else if v == f64::NEG_INFINITY {
        out.push_str("-Inf");
    } else {
        // `Display` for f64 is the shortest string that parses back exactly.
        let _ = write!(out, "{v}");
    }
}

pub(crate) fn control_name(mode: ControlMode) -> &'static str {
    match mode {
        ControlMode::PowerVoltage => "P-V",
        ControlMode::CurrentVoltage => "I-V",
    }
}

pub(crate) fn dcline_row(out: &mut String, l: &LccLink) {
    let _ = write!(
        out,
        "\t{}\t{}\t{}\t{}\t'{}'",
        l.r_bus,
        l.i_bus,
        l.bridges_r,
        l.bridges_i,
        control_name(l.control)
    );
    for v in [
        l.p_set,
        l.v_set,
        l.i_set,
        l.xc_r,
        l.xc_i,
        l.r_dc,
        l.tap_r,
        l.tap_i,
        l.tap_step,
        l.tap_min,
        l.tap_max,
        l.alpha_range[0],
        l.alpha_range[1],
        l.gamma_range[0],
        l.gamma_range[1],
        if l.in_service { 1.0 } else { 0.0 },
    ] {
        out.push('\t');
        write_num(out, v);
    }
    out.push_str(";\n");
}

/// Serialize a case back to the text format accepted by [`super::parse_case`].
pub fn write_case(case: &CaseData) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", case.name);
    out.push_str("mpc.version = '2';\n");
    out.push_str("mpc.baseMVA = ");
    write_num(&mut out, case.base_mva);
    out.push_str(";\n\n");

    out.push_str("%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in &case.bus_records {
        row(
            &mut out,
            [
                b.id as f64,
                b.kind as f64,
                b.pd,
                b.qd,
                b.gs,
                b.bs,
                b.area,
                b.vm,
                b.va,
                b.base_kv,
                b.zone,
                b.vmax,
                b.vmin,
            ]
            .into_iter()
            .chain(b.extra.iter().copied()),
        );
    }
    out.push_str("];\n\n");

    out.push_str("%% generator data\nmpc.gen = [\n");
    for g in &case.gen_records {
        row(
            &mut out,
            [
                g.bus as f64,
                g.pg,
                g.qg,
                g.qmax,
                g.qmin,
                g.vg,
                g.mbase,
                g.status,
                g.pmax,
                g.pmin,
            ]
            .into_iter()
            .chain(g.extra.iter().copied()),
        );
    }
    out.push_str("];\n\n");

    out.push_str("%% branch data\nmpc.branch = [\n");
    for br in &case.branch_records {
        row(
            &mut out,
            [
                br.from as f64,
                br.to as f64,
                br.r,
                br.x,
                br.b,
                br.rate_a,
                br.rate_b,
                br.rate_c,
                br.ratio,
                br.angle,
                br.status,
                br.angmin,
                br.angmax,
            ]
            .into_iter()
            .chain(br.extra.iter().copied()),
        );
    }
    out.push_str("];\n");

    if !case.dcline_records.is_empty() {
        out.push_str(
            "\n%% lcc dc line data\n%\tfrom\tto\tNr\tNi\tcontrol\tP_MW\tV_kV\tI_kA\tXcr\tXci\tRdc\tTr\tTi\tstep\tTmin\tTmax\tamin\tamax\tgmin\tgmax\tstatus\nmpc.dcline = [\n",
        );
        for l in &case.dcline_records {
            dcline_row(&mut out, l);
        }
        out.push_str("];\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_case;
    use super::*;
    use proptest::prelude::*;

    const CASE: &str = "\
function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1.02 0 230 1 1.1 0.9;
2 1 10.5 5.25 0.1 -3 1 1 -1.5 230 1 1.1 0.9 7 8;
];
mpc.gen = [
1 20 0 300 -300 1.02 100 1 250 0 0 0;
];
mpc.branch = [
1 2 0.01 0.1 0.02 0 0 0 0.98 2 1 -360 360;
];
mpc.dcline = [
1 2 4 2 'I-V' 100 460 0.21 6.8 7.1 6.2 0.7478 0.75 0.005 0.6 0.9 15 20 18 20 1;
];
";

    #[test]
    fn round_trip_keeps_extra_columns() {
        let a = parse_case(CASE).unwrap();
        let b = parse_case(&write_case(&a)).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.bus_records[1].extra, vec![7.0, 8.0]);
        assert_eq!(b.dcline_records[0].bridges_i, 2);
    }

    proptest! {
        #[test]
        fn parse_write_parse_is_fixed_point(
            pd in -1e4f64..1e4, qd in -1e4f64..1e4, va in -180f64..180.0,
            r in 0f64..1.0, x in 1e-4f64..1.0, p_set in 1f64..3000.0,
        ) {
            let mut case = parse_case(CASE).unwrap();
            case.bus_records[1].pd = pd;
            case.bus_records[1].qd = qd;
            case.bus_records[1].va = va;
            case.branch_records[0].r = r;
            case.branch_records[0].x = x;
            case.dcline_records[0].p_set = p_set;
            let once = parse_case(&write_case(&case)).unwrap();
            prop_assert_eq!(&once, &case);
            let twice = parse_case(&write_case(&once)).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
