//! Command-line front end: train, test, predict, predict-prob.

use std::io::{BufRead, BufWriter, Write};
use std::process::ExitCode;

use ftclass::{
    evaluate, load, predict, save, tokenize, trainer, Error, LossKind, TrainConfig,
};

const USAGE: &str = "\
usage: ftclass <command> <args>

commands:
  train         train a classifier
                  -input <file>     training corpus (required)
                  -output <prefix>  model written to <prefix>.bin (required)
                  -dim <n>          hidden dimension (10)
                  -epoch <n>        training epochs (5)
                  -lr <x>           base learning rate (0.1)
                  -wordNgrams <n>   max n-gram order (1)
                  -bucket <n>       hash bins for n-grams (10M for bigrams, 100M above)
                  -minCount <n>     minimal word count (1)
                  -minCountLabel <n> minimal label count (1)
                  -thread <n>       worker threads (1)
                  -loss <softmax|hs> loss (auto: softmax up to 64 labels)
                  -seed <n>         rng seed (42)
                  -quiet            suppress progress output
  test          ftclass test <model.bin> <test.txt> [k]
  predict       ftclass predict <model.bin> <input|-> [T] [-placeholder <tok>]
  predict-prob  like predict, appending natural-log probabilities
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = match args.first().map(String::as_str) {
        Some("train") => cmd_train(&args[1..]),
        Some("test") => cmd_test(&args[1..]),
        Some("predict") => cmd_predict(&args[1..], false),
        Some("predict-prob") => cmd_predict(&args[1..], true),
        _ => {
            eprint!("{USAGE}");
            return ExitCode::FAILURE;
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_train(args: &[String]) -> ftclass::Result<()> {
    let mut config = TrainConfig {
        verbose: true,
        ..TrainConfig::default()
    };
    let mut input = None;
    let mut output = None;

    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let mut value = |name: &str| -> ftclass::Result<&String> {
            it.next()
                .ok_or_else(|| Error::Config(format!("{name} needs a value\n{USAGE}")))
        };
        match flag.as_str() {
            "-input" => input = Some(value("-input")?.clone()),
            "-output" => output = Some(value("-output")?.clone()),
            "-dim" => config.dim = parse(value("-dim")?, "-dim")?,
            "-epoch" => config.epochs = parse(value("-epoch")?, "-epoch")?,
            "-lr" => config.lr0 = parse(value("-lr")?, "-lr")?,
            "-wordNgrams" => config.ngram_order = parse(value("-wordNgrams")?, "-wordNgrams")?,
            "-bucket" => config.bucket = Some(parse(value("-bucket")?, "-bucket")?),
            "-minCount" => config.min_count = parse(value("-minCount")?, "-minCount")?,
            "-minCountLabel" => {
                config.label_min_count = parse(value("-minCountLabel")?, "-minCountLabel")?
            }
            "-thread" => config.threads = parse(value("-thread")?, "-thread")?,
            "-seed" => config.seed = parse(value("-seed")?, "-seed")?,
            "-loss" => {
                config.loss = Some(match value("-loss")?.as_str() {
                    "softmax" => LossKind::FullSoftmax,
                    "hs" => LossKind::HierarchicalSoftmax,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown loss '{other}' (use softmax or hs)"
                        )))
                    }
                })
            }
            "-quiet" => config.verbose = false,
            other => return Err(Error::Config(format!("unknown flag '{other}'\n{USAGE}"))),
        }
    }
    let input = input.ok_or_else(|| Error::Config(format!("-input is required\n{USAGE}")))?;
    let output = output.ok_or_else(|| Error::Config(format!("-output is required\n{USAGE}")))?;

    let out = trainer::train(&input, &config)?;
    save(&out.model, &out.dict, config.epochs, format!("{output}.bin"))?;
    println!(
        "wall-clock: {:.2}s  tokens/sec: {:.0}",
        out.stats.elapsed_secs, out.stats.tokens_per_sec
    );
    Ok(())
}

fn cmd_test(args: &[String]) -> ftclass::Result<()> {
    let (model_path, rest) = args
        .split_first()
        .ok_or_else(|| Error::Config(format!("test needs a model path\n{USAGE}")))?;
    let (test_path, rest) = rest
        .split_first()
        .ok_or_else(|| Error::Config(format!("test needs a test file\n{USAGE}")))?;
    let k: usize = match rest {
        [] => 1,
        [k] => parse(k, "k")?,
        _ => return Err(Error::Config(format!("too many arguments\n{USAGE}"))),
    };
    let loaded = load(model_path)?;
    let report = evaluate(&loaded.model, &loaded.dict, test_path, k)?;
    println!("{}", report.format_lines());
    Ok(())
}

fn cmd_predict(args: &[String], with_probabilities: bool) -> ftclass::Result<()> {
    let mut positional = Vec::new();
    let mut placeholder = "__label__?".to_string();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if arg == "-placeholder" {
            placeholder = it
                .next()
                .ok_or_else(|| Error::Config("-placeholder needs a value".into()))?
                .clone();
        } else if arg.starts_with('-') && arg.len() > 1 {
            return Err(Error::Config(format!("unknown flag '{arg}'\n{USAGE}")));
        } else {
            positional.push(arg.clone());
        }
    }
    let (model_path, input, t) = match positional.as_slice() {
        [m, i] => (m.clone(), i.clone(), 1usize),
        [m, i, t] => (m.clone(), i.clone(), parse(t, "T")?),
        _ => return Err(Error::Config(format!("predict needs <model> <input|-> [T]\n{USAGE}"))),
    };

    let loaded = load(model_path)?;
    let stdin = std::io::stdin();
    let reader: Box<dyn BufRead> = if input == "-" {
        Box::new(stdin.lock())
    } else {
        Box::new(std::io::BufReader::new(std::fs::File::open(input)?))
    };
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());

    for line in reader.lines() {
        let line = line?;
        let (_, words) = tokenize(&line);
        let features = loaded.dict.featurize(&words);
        if features.is_empty() {
            writeln!(out, "{placeholder}")?;
            continue;
        }
        let prediction = predict(&loaded.model, &features, t)?;
        let mut first = true;
        for (label, logp) in &prediction.entries {
            if !first {
                write!(out, " ")?;
            }
            first = false;
            write!(out, "__label__{}", loaded.dict.label_token(*label))?;
            if with_probabilities {
                write!(out, " {logp:.6}")?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(value: &str, flag: &str) -> ftclass::Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {flag}")))
}
