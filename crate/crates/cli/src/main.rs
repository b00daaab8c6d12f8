fn main() -> std::process::ExitCode {
    lipex_cli::main_entry()
}
