fn main() -> std::process::ExitCode {
    eyecontact::cli::main()
}
