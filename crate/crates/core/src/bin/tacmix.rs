//! Binary entry point delegating to the library command-line module.

fn main() {
    std::process::exit(tacmix::cli::run(std::env::args_os()));
}
