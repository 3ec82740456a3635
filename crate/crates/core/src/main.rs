fn main() {
    std::process::exit(tissue_flow::harness::cli::run_cli());
}
