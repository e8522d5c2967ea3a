//! Oracle implemented by an external process speaking a line protocol.
//!
//! Per query the process receives the design vector on one line and the
//! priority order (task ids, highest first) on the next. It must answer with
//! a single line: `0` for schedulable, `1` for unschedulable.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::oracle::{SchedulabilityOracle, Verdict};
use crate::taskmodel::PriorityAssignment;

pub const DEFAULT_QUERY_TIMEOUT: Duration = Duration::from_secs(10);

/// Formats `v` as a plain decimal rounded to 12 significant digits, without
/// trailing zeros or exponent.
pub fn format_decimal(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("exponent format parses");
    if rounded == 0.0 {
        return "0".into();
    }
    let exp = rounded.abs().log10().floor() as i32;
    let decimals = (11 - exp).max(0) as usize;
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    s
}

pub struct ExternalOracle {
    command: String,
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<std::io::Result<String>>,
    timeout: Duration,
    queries: u64,
    // Set after a timeout or protocol error; the stream is out of sync then.
    broken: Option<String>,
}

/// Launches `command` through `sh -c` and wraps it as an oracle.
pub fn spawn_external_oracle(command: &str) -> Result<ExternalOracle> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::Oracle(format!("cannot launch `{command}`: {e}")))?;
    let stdin = child.stdin.take().expect("stdin is piped");
    let stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    Ok(ExternalOracle {
        command: command.to_string(),
        child,
        stdin,
        replies: rx,
        timeout: DEFAULT_QUERY_TIMEOUT,
        queries: 0,
        broken: None,
    })
}

impl ExternalOracle {
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn fail(&mut self, msg: String) -> Error {
        let msg = format!("`{}`: {msg}", self.command);
        self.broken = Some(msg.clone());
        Error::Oracle(msg)
    }

    fn query(&mut self, x: &[f64], prio: &PriorityAssignment) -> Result<bool> {
        if let Some(msg) = &self.broken {
            return Err(Error::Oracle(format!("unusable after earlier failure: {msg}")));
        }
        let xs: Vec<String> = x.iter().map(|&v| format_decimal(v)).collect();
        let ids: Vec<String> = prio.order().iter().map(|t| t.to_string()).collect();
        let request = format!("{}\n{}\n", xs.join(" "), ids.join(" "));
        if let Err(e) = self.stdin.write_all(request.as_bytes()).and_then(|_| self.stdin.flush()) {
            return Err(self.fail(format!("write failed: {e}")));
        }
        match self.replies.recv_timeout(self.timeout) {
            Ok(Ok(line)) => match line.trim() {
                "0" => Ok(true),
                "1" => Ok(false),
                other => Err(self.fail(format!("malformed reply {other:?}"))),
            },
            Ok(Err(e)) => Err(self.fail(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                Err(self.fail(format!("no reply within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => Err(self.fail("process exited".into())),
        }
    }
}

impl SchedulabilityOracle for ExternalOracle {
    fn analyze(&mut self, x: &[f64], prio: &PriorityAssignment) -> Result<Verdict> {
        self.queries += 1;
        let schedulable = self.query(x, prio)?;
        Ok(Verdict { schedulable, response: None })
    }

    fn query_count(&self) -> u64 {
        self.queries
    }

    fn provides_response_times(&self) -> bool {
        false
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reply_loop(answer: &str) -> String {
        format!("while read x && read p; do echo {answer}; done")
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_decimal(4.0), "4");
        assert_eq!(format_decimal(0.5), "0.5");
        assert_eq!(format_decimal(5.999), "5.999");
        assert_eq!(format_decimal(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_decimal(-2.5e-3), "-0.0025");
        assert_eq!(format_decimal(123456789012345.0), "123456789012000");
        assert_eq!(format_decimal(0.0), "0");
    }

    #[test]
    fn replies_map_to_verdicts() {
        let p = PriorityAssignment::identity(2);
        let mut yes = spawn_external_oracle(&reply_loop("0")).unwrap();
        assert!(yes.is_schedulable(&[1.0, 2.0], &p).unwrap());
        assert!(yes.is_schedulable(&[1.5, 2.0], &p).unwrap());
        assert_eq!(yes.query_count(), 2);
        let mut no = spawn_external_oracle(&reply_loop("1")).unwrap();
        assert!(!no.is_schedulable(&[1.0, 2.0], &p).unwrap());
    }

    #[test]
    fn malformed_reply_is_an_error() {
        let p = PriorityAssignment::identity(1);
        let mut o = spawn_external_oracle(&reply_loop("maybe")).unwrap();
        assert!(matches!(o.is_schedulable(&[1.0], &p), Err(Error::Oracle(_))));
        assert!(matches!(o.is_schedulable(&[1.0], &p), Err(Error::Oracle(_))));
    }

    #[test]
    fn exit_and_timeout_are_errors() {
        let p = PriorityAssignment::identity(1);
        let mut gone = spawn_external_oracle("exit 0").unwrap();
        assert!(matches!(gone.is_schedulable(&[1.0], &p), Err(Error::Oracle(_))));
        let mut slow = spawn_external_oracle("sleep 5")
            .unwrap()
            .with_timeout(Duration::from_millis(200));
        assert!(matches!(slow.is_schedulable(&[1.0], &p), Err(Error::Oracle(_))));
    }

    #[test]
    fn request_lines_follow_the_protocol() {
        // Schedulable iff the first value is 4.5 and task 1 is on top.
        let script = "while read x p_unused && read top rest; do \
                      if [ \"$top\" = 1 ] && [ \"$x\" = 4.5 ]; then echo 0; else echo 1; fi; done";
        let mut o = spawn_external_oracle(script).unwrap();
        let top1 = PriorityAssignment::new(vec![1, 0]).unwrap();
        assert!(o.is_schedulable(&[4.5, 1.0], &top1).unwrap());
        assert!(!o.is_schedulable(&[4.5, 1.0], &PriorityAssignment::identity(2)).unwrap());
    }
}
