fn main() {
    std::process::exit(hidden_action_cli::main_with_args(std::env::args_os()));
}
