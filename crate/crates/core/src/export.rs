//! CSV and JSON writers with lossless float formatting.

use serde::Serialize;
use std::io::{self, Write};

use crate::sde::SdeEnsemble;
use crate::trajectory::Trajectory;

/// JSON formatter printing every finite float with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{}", sig17(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }
}

/// `value` in scientific notation with 17 significant digits.
pub fn sig17(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// One JSON document per line.
pub fn write_jsonl<W: Write, T: Serialize>(w: &mut W, items: &[T]) -> io::Result<()> {
    for it in items {
        writeln!(w, "{}", to_json(it).map_err(io::Error::other)?)?;
    }
    Ok(())
}

/// Columns `n,T_n,alpha_n,side_n,x,y`, one row per reflection after the launch point.
pub fn write_events_csv<W: Write>(w: &mut W, traj: &Trajectory) -> io::Result<()> {
    writeln!(w, "n,T_n,alpha_n,side_n,x,y")?;
    for (n, e) in traj.events.iter().enumerate().skip(1) {
        writeln!(
            w,
            "{n},{},{},{},{},{}",
            e.time,
            e.alpha,
            e.side.index(),
            e.position.x,
            e.position.y
        )?;
    }
    Ok(())
}

/// Columns `path_id,s,beta_rescaled`; `paths[i][j]` is path `i` at `s_grid[j]`.
pub fn write_rescaled_csv<W: Write>(
    w: &mut W,
    s_grid: &[f64],
    paths: &[Vec<f64>],
) -> io::Result<()> {
    writeln!(w, "path_id,s,beta_rescaled")?;
    for (i, p) in paths.iter().enumerate() {
        for (s, b) in s_grid.iter().zip(p) {
            writeln!(w, "{i},{s},{b}")?;
        }
    }
    Ok(())
}

/// Columns `path_id,t,X`.
pub fn write_sde_csv<W: Write>(w: &mut W, ens: &SdeEnsemble) -> io::Result<()> {
    writeln!(w, "path_id,t,X")?;
    let n = ens.samples.first().map_or(0, Vec::len);
    for i in 0..n {
        for (t, col) in ens.t_grid.iter().zip(&ens.samples) {
            writeln!(w, "{i},{t},{}", col[i])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainState, StepMethod};
    use crate::geometry::{Side, TubeProfile};

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = sig17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(
                s.split('e')
                    .next()
                    .unwrap()
                    .chars()
                    .filter(char::is_ascii_digit)
                    .count(),
                17
            );
        }
    }

    #[test]
    fn json_floats_use_fixed_precision() {
        #[derive(Serialize)]
        struct R {
            a: f64,
            n: u32,
            bad: f64,
        }
        let s = to_json(&R {
            a: 0.1,
            n: 3,
            bad: f64::NAN,
        })
        .unwrap();
        assert_eq!(s, r#"{"a":1.0000000000000001e-1,"n":3,"bad":null}"#);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn event_csv_round_trips() {
        let p = TubeProfile::exact_annulus(0.1).unwrap();
        let traj = Trajectory::from_launches(
            &p,
            StepMethod::ClosedForm,
            ChainState::new(0.1, Side::Outer),
            &[0.4, -0.3],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "n,T_n,alpha_n,side_n,x,y");
        assert_eq!(rows.len(), 3);
        let last: Vec<f64> = rows[2].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last[1], traj.events[2].time);
        assert_eq!(last[2], traj.events[2].alpha);
    }
}
