use storage_balance::cli;

fn main() {
    let status = cli::run(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    std::process::exit(status as i32);
}
