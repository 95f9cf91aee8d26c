fn main() -> std::process::ExitCode {
    onion_archive::cli::main()
}
