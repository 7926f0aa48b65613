//! External trainer protocol: newline-delimited JSON over a child process's
//! standard streams.
//!
//! One training session is one request cycle: `init` names the block, the
//! dataset descriptor, the seed, and (for stacked candidates) the repeat
//! count; each `epoch` request trains one epoch and answers
//! `{"loss":..,"acc":..}`; `close` ends the session. A worker may serve any
//! number of sessions sequentially on one connection; the client side here
//! spawns one process per session so sessions can run concurrently. The
//! [`serve`] loop adapts any in-process trainer to the worker side, which is
//! how the synthetic trainer doubles as a protocol test peer.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::blockmodel::StackPlan;
use crate::dataset::DatasetDescriptor;
use crate::encoding::BlockSpec;
use crate::evaluator::{Trainer, TrainerError, TrainerSession};
use crate::Scalar;

#[derive(Debug, Serialize, Deserialize)]
#[serde(
    tag = "cmd",
    rename_all = "lowercase",
    bound(deserialize = "F: crate::Scalar")
)]
enum Request<F> {
    Init {
        block: Vec<u32>,
        dataset: DatasetDescriptor<F>,
        seed: u64,
        #[serde(default = "default_repeats")]
        repeats: u32,
    },
    Epoch,
    Close,
}

fn default_repeats() -> u32 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
struct Ack {
    ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EpochResponse<F> {
    loss: F,
    acc: F,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Reply<F> {
    Measurement(EpochResponse<F>),
    Failure { error: String },
}

/// Trainer backed by a worker command; each session spawns one process.
#[derive(Debug, Clone)]
pub struct PluginTrainer {
    command: String,
}

impl PluginTrainer {
    /// `command` is run through `sh -c`, so it may carry arguments.
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
        }
    }
}

impl<F: Scalar> Trainer<F> for PluginTrainer {
    fn start(
        &self,
        plan: &StackPlan<F>,
        dataset: &DatasetDescriptor<F>,
        seed: u64,
    ) -> Result<Box<dyn TrainerSession<F>>, TrainerError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| TrainerError::Init(format!("spawning {:?}: {e}", self.command)))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| TrainerError::Init("worker stdin unavailable".into()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| TrainerError::Init("worker stdout unavailable".into()))?;
        let mut session = PluginSession {
            child,
            stdin: Some(BufWriter::new(stdin)),
            stdout: BufReader::new(stdout),
        };
        let init = Request::Init {
            block: plan.block.growth_rates.clone(),
            dataset: dataset.clone(),
            seed,
            repeats: plan.repeats,
        };
        session
            .send(&init)
            .map_err(|e| TrainerError::Init(e.to_string()))?;
        let ack: Ack = session
            .receive()
            .map_err(|e| TrainerError::Init(e.to_string()))?;
        if !ack.ok {
            return Err(TrainerError::Init(
                ack.error.unwrap_or_else(|| "worker rejected init".into()),
            ));
        }
        Ok(Box::new(session))
    }
}

struct PluginSession {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
}

impl PluginSession {
    fn send<T: Serialize>(&mut self, message: &T) -> std::io::Result<()> {
        let stdin = self.stdin.as_mut().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::BrokenPipe, "session already closed")
        })?;
        serde_json::to_writer(&mut *stdin, message)?;
        stdin.write_all(b"\n")?;
        stdin.flush()
    }

    fn receive<T: serde::de::DeserializeOwned>(&mut self) -> std::io::Result<T> {
        let mut line = String::new();
        let read = self.stdout.read_line(&mut line)?;
        if read == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "worker closed its stream",
            ));
        }
        serde_json::from_str(&line).map_err(std::io::Error::from)
    }
}

impl<F: Scalar> TrainerSession<F> for PluginSession {
    fn train_epoch(&mut self) -> Result<(F, F), TrainerError> {
        self.send(&Request::<F>::Epoch)
            .map_err(|e| TrainerError::Epoch(e.to_string()))?;
        let reply: Reply<F> = self
            .receive()
            .map_err(|e| TrainerError::Epoch(e.to_string()))?;
        match reply {
            Reply::Measurement(m) => Ok((m.loss, m.acc)),
            Reply::Failure { error } => Err(TrainerError::Epoch(error)),
        }
    }
}

impl Drop for PluginSession {
    fn drop(&mut self) {
        let _ = self.send(&Request::<f64>::Close);
        // Dropping stdin delivers EOF so the worker's serve loop exits.
        self.stdin = None;
        let _ = self.child.wait();
    }
}

/// Serves an in-process trainer over the worker side of the protocol until
/// the input stream ends. Protocol-level problems are answered as
/// `{"error": ...}` lines; only transport failures end the loop early.
pub fn serve<F: Scalar>(
    trainer: &dyn Trainer<F>,
    input: impl BufRead,
    mut output: impl Write,
) -> std::io::Result<()> {
    let mut session: Option<Box<dyn TrainerSession<F>>> = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request<F> = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                respond(
                    &mut output,
                    &Ack {
                        ok: false,
                        error: Some(format!("bad request: {e}")),
                    },
                )?;
                continue;
            }
        };
        match request {
            Request::Init {
                block,
                dataset,
                seed,
                repeats,
            } => {
                let plan = StackPlan::<F> {
                    block: BlockSpec::new(block),
                    repeats,
                    compression: F::from_f64_lossy(0.5),
                    stem_channels: 24,
                };
                match trainer.start(&plan, &dataset, seed) {
                    Ok(s) => {
                        session = Some(s);
                        respond(
                            &mut output,
                            &Ack {
                                ok: true,
                                error: None,
                            },
                        )?;
                    }
                    Err(e) => {
                        session = None;
                        respond(
                            &mut output,
                            &Ack {
                                ok: false,
                                error: Some(e.to_string()),
                            },
                        )?;
                    }
                }
            }
            Request::Epoch => match session.as_mut() {
                Some(s) => match s.train_epoch() {
                    Ok((loss, acc)) => respond(&mut output, &EpochResponse { loss, acc })?,
                    Err(e) => respond(
                        &mut output,
                        &Ack {
                            ok: false,
                            error: Some(e.to_string()),
                        },
                    )?,
                },
                None => respond(
                    &mut output,
                    &Ack {
                        ok: false,
                        error: Some("epoch requested before init".into()),
                    },
                )?,
            },
            Request::Close => {
                session = None;
            }
        }
    }
    Ok(())
}

fn respond<T: Serialize>(output: &mut impl Write, message: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *output, message)?;
    output.write_all(b"\n")?;
    output.flush()
}
