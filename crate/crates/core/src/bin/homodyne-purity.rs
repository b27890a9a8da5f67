fn main() -> std::process::ExitCode {
    homodyne_purity::cli::main()
}
