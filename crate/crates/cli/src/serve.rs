use std::fs;
use std::io::Write;
use std::sync::Arc;
use std::thread;

use anyhow::anyhow;
use bundlesplit::vruntime::PlanStore;
use tiny_http::{Method, Request, Response, Server};

use crate::commands::load_plan;
use crate::{CmdResult, Failure, ServeArgs, EXIT_IO};

/// Store path to `(app_id, activity)`; `None` for anything else.
fn route(url: &str) -> Option<(&str, Option<&str>)> {
    let path = url.split(['?', '#']).next()?;
    let rest = path.strip_prefix("/apps/")?;
    let (app_id, tail) = rest.split_once('/')?;
    if tail == "base.abundle" {
        return Some((app_id, None));
    }
    let activity = tail.strip_prefix("features/")?.strip_suffix(".abundle")?;
    Some((app_id, Some(activity)))
}

fn handle(store: &PlanStore, request: Request) {
    let url = request.url().to_string();
    let response = if *request.method() != Method::Get {
        Response::from_string("method not allowed").with_status_code(405)
    } else {
        match route(&url)
            .and_then(|(app, activity)| store.file_for(app, activity))
            .and_then(|path| fs::read(path).ok())
        {
            Some(bytes) => Response::from_data(bytes),
            None => Response::from_string("not found").with_status_code(404),
        }
    };
    log::debug!("GET {url} -> {}", response.status_code().0);
    if let Err(e) = request.respond(response) {
        log::warn!("responding to {url}: {e}");
    }
}

pub fn serve(args: ServeArgs) -> CmdResult {
    let plan = load_plan(&args.plan)?;
    let store = Arc::new(PlanStore::new(&plan.app_id, &args.plan));
    let server = Server::http(&args.addr)
        .map_err(|e| Failure::new(EXIT_IO, anyhow!("binding {}: {e}", args.addr)))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Failure::new(EXIT_IO, anyhow!("not an IP listener")))?;
    println!("serving {} on http://{addr}", plan.app_id);
    std::io::stdout().flush().ok();

    let server = Arc::new(server);
    let workers: Vec<_> = (0..args.threads.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let store = Arc::clone(&store);
            thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    handle(&store, request);
                }
            })
        })
        .collect();
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}
