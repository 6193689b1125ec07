use std::process::exit;

fn main() {
    exit(zenosim::cli::run_cli());
}
