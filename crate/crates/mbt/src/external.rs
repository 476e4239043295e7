//! Out-of-process SUTs speaking a line-delimited JSON protocol.
//!
//! The harness writes one request object per line to the adapter's stdin
//! and reads one response object per line from its stdout:
//!
//! ```text
//! {"op":"reset","kernel":"classic","config":{...}}   -> {"ok":true}
//! {"op":"declare","object":"task","name":"T1"}       -> {"ok":true}
//! {"op":"perform","invoker":"T1","api":"ActivateTask","args":["T2"]}
//!                                                    -> {"ok":true,"status":"E_OK"}
//! {"op":"observe"}                                   -> {"ok":true,"observation":{...}}
//! {"op":"await","task":"T1","step":4}                -> {"ok":true}
//! {"op":"publish","task":"T1","step":5}              -> {"ok":true}
//! ```
//!
//! A failed request answers `{"ok":false,"error":"...","rejected":true}`
//! when the SUT refused it and `"rejected":false` when the SUT itself broke.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mbt_core::defect::DefectKind;
use mbt_core::harness::{mutant_sut, reference_sut, ModelSut, SutAdapter, SutError};
use mbt_core::model::ObjectKind;
use mbt_core::{Api, ConfigDoc, KernelKind, Observation, Status};

use crate::formats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Reset {
        kernel: KernelKind,
        config: Value,
    },
    Declare {
        object: ObjectKind,
        name: String,
    },
    Perform {
        invoker: String,
        api: Api,
        args: Vec<String>,
    },
    Observe,
    Await {
        task: String,
        step: u32,
    },
    Publish {
        task: String,
        step: u32,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rejected: bool,
}

impl Response {
    fn ok() -> Self {
        Response {
            ok: true,
            ..Response::default()
        }
    }

    fn failure(e: SutError) -> Self {
        let (error, rejected) = match e {
            SutError::Rejected(m) => (m, true),
            SutError::Infrastructure(m) => (m, false),
        };
        Response {
            ok: false,
            error: Some(error),
            rejected,
            ..Response::default()
        }
    }

    fn into_result(self) -> Result<Response, SutError> {
        if self.ok {
            Ok(self)
        } else {
            let message = self
                .error
                .unwrap_or_else(|| "unspecified failure".to_string());
            Err(if self.rejected {
                SutError::Rejected(message)
            } else {
                SutError::Infrastructure(message)
            })
        }
    }
}

/// A SUT running as a child process, started through `sh -c`.
pub struct ExternalSut {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ExternalSut {
    pub fn spawn(command: &str) -> io::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalSut {
            child,
            stdin,
            stdout,
        })
    }

    fn call(&mut self, request: &Request) -> Result<Response, SutError> {
        let broken = |e: io::Error| SutError::Infrastructure(format!("adapter transport: {e}"));
        let mut line = serde_json::to_string(request).expect("serializable");
        line.push('\n');
        self.stdin.write_all(line.as_bytes()).map_err(broken)?;
        self.stdin.flush().map_err(broken)?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply).map_err(broken)? == 0 {
            return Err(SutError::Infrastructure(
                "adapter closed its output".to_string(),
            ));
        }
        serde_json::from_str::<Response>(&reply)
            .map_err(|e| SutError::Infrastructure(format!("malformed adapter response: {e}")))?
            .into_result()
    }

    fn call_ok(&mut self, request: &Request) -> Result<(), SutError> {
        self.call(request).map(drop)
    }
}

impl Drop for ExternalSut {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl SutAdapter for ExternalSut {
    fn reset(&mut self, config: &ConfigDoc) -> Result<(), SutError> {
        let text = formats::config_to_json(config);
        self.call_ok(&Request::Reset {
            kernel: config.kind(),
            config: serde_json::from_str(&text).expect("canonical config is JSON"),
        })
    }

    fn declare(&mut self, object: ObjectKind, name: &str) -> Result<(), SutError> {
        self.call_ok(&Request::Declare {
            object,
            name: name.to_string(),
        })
    }

    fn perform(&mut self, invoker: &str, api: Api, args: &[String]) -> Result<Status, SutError> {
        self.call(&Request::Perform {
            invoker: invoker.to_string(),
            api,
            args: args.to_vec(),
        })?
        .status
        .ok_or_else(|| SutError::Infrastructure("perform response without status".to_string()))
    }

    fn observe(&mut self) -> Result<Observation, SutError> {
        self.call(&Request::Observe)?.observation.ok_or_else(|| {
            SutError::Infrastructure("observe response without observation".to_string())
        })
    }

    fn await_step(&mut self, task: &str, step: u32) -> Result<(), SutError> {
        self.call_ok(&Request::Await {
            task: task.to_string(),
            step,
        })
    }

    fn publish_step(&mut self, task: &str, step: u32) -> Result<(), SutError> {
        self.call_ok(&Request::Publish {
            task: task.to_string(),
            step,
        })
    }
}

/// Answers protocol requests with a model SUT until `input` ends.
pub fn serve<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    defect: Option<&DefectKind>,
) -> io::Result<()> {
    let mut sut: Option<ModelSut> = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(request) => answer(&mut sut, request, defect),
            Err(e) => {
                Response::failure(SutError::Infrastructure(format!("malformed request: {e}")))
            }
        };
        let mut text = serde_json::to_string(&response).expect("serializable");
        text.push('\n');
        output.write_all(text.as_bytes())?;
        output.flush()?;
    }
    Ok(())
}

fn answer(sut: &mut Option<ModelSut>, request: Request, defect: Option<&DefectKind>) -> Response {
    let result = match request {
        Request::Reset { kernel, config } => {
            let doc = formats::parse_config(&config.to_string(), Some(kernel))
                .map_err(|e| SutError::Infrastructure(e.to_string()));
            doc.and_then(|doc| {
                let fresh = match defect {
                    None => reference_sut(&doc),
                    Some(d) => mutant_sut(d, &doc),
                };
                *sut = Some(fresh.map_err(|e| SutError::Infrastructure(e.to_string()))?);
                Ok(Response::ok())
            })
        }
        other => match sut.as_mut() {
            None => Err(SutError::Infrastructure(
                "no configuration loaded".to_string(),
            )),
            Some(sut) => dispatch(sut, other),
        },
    };
    result.unwrap_or_else(Response::failure)
}

fn dispatch(sut: &mut ModelSut, request: Request) -> Result<Response, SutError> {
    Ok(match request {
        Request::Reset { .. } => unreachable!("handled by the caller"),
        Request::Declare { object, name } => {
            sut.declare(object, &name)?;
            Response::ok()
        }
        Request::Perform { invoker, api, args } => Response {
            status: Some(sut.perform(&invoker, api, &args)?),
            ..Response::ok()
        },
        Request::Observe => Response {
            observation: Some(sut.observe()?),
            ..Response::ok()
        },
        Request::Await { task, step } => {
            sut.await_step(&task, step)?;
            Response::ok()
        }
        Request::Publish { task, step } => {
            sut.publish_step(&task, step)?;
            Response::ok()
        }
    })
}
