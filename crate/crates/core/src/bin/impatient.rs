fn main() -> std::process::ExitCode {
    impatient::cli::main()
}
