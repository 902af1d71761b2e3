use clap::Parser;
use wobbly::cli::{main_with, Args, Status};

fn main() {
    let status = match Args::try_parse() {
        Ok(args) => main_with(args),
        Err(e) => {
            let _ = e.print();
            // clap reports usage errors as 2, which is reserved for failed checks
            if e.use_stderr() {
                Status::Error
            } else {
                Status::Success
            }
        }
    };
    std::process::exit(status as i32);
}
