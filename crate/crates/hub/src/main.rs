fn main() -> std::process::ExitCode {
    pmi_hub::cli::main()
}
