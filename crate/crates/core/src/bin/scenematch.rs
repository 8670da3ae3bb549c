fn main() -> std::process::ExitCode {
    scenematch::cli::main()
}
