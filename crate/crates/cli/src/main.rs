use chrono::NaiveDateTime;
use roadspeed::capture::{Clock, FixedClock, SystemClock, TIME_FORMAT};
use roadspeed_cli::{run, EXIT_USAGE, NOW_ENV};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let clock: Box<dyn Clock> = match std::env::var(NOW_ENV) {
        Ok(s) => match NaiveDateTime::parse_from_str(&s, TIME_FORMAT) {
            Ok(t) => Box::new(FixedClock(t)),
            Err(e) => {
                eprintln!("error: {NOW_ENV}={s:?} is not YYYY-MM-DD_hh_mm_ss: {e}");
                std::process::exit(EXIT_USAGE);
            }
        },
        Err(_) => Box::new(SystemClock),
    };
    let code = run(std::env::args_os(), clock.as_ref(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
