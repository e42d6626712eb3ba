fn main() -> std::process::ExitCode {
    saa_lab_cli::main_entry()
}
