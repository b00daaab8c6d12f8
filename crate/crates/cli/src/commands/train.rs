use anyhow::{Context, Result};
use lipex::ingestion::{synthetic_corpus, Split, SynthConfig};
use lipex::load_dataset;
use lipex::model::{split_accuracy, train_on_dataset, Architecture, TrainConfig};
use serde_json::json;

use crate::args::{Arch, SynthArgs, TrainArgs};
use crate::config::RunConfig;
use crate::io::{write_json, ModelFile, SplitInfo};

pub fn train(args: &TrainArgs) -> Result<()> {
    let seed = args.seed.unwrap_or(0);
    let ds = load_dataset(&args.dataset, args.format)
        .with_context(|| format!("loading {}", args.dataset.display()))?
        .split(args.train_ratio, seed)?;
    let architecture = match args.arch {
        Arch::Logistic => Architecture::logistic(),
        Arch::Mlp => Architecture::relu_mlp(args.hidden),
    };
    let mut cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(e) = args.train_epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.train_lr {
        cfg.learning_rate = lr;
    }

    let mut run = RunConfig::new("train", seed);
    run.dataset = Some(args.dataset.display().to_string());
    run.settings = json!({
        "format": args.format,
        "architecture": architecture,
        "train": cfg,
        "train_ratio": args.train_ratio,
    });

    let (model, report) = train_on_dataset(&ds, architecture, &cfg)?;
    let eval_accuracy = split_accuracy(&model, &ds, Split::Eval)?;
    println!("train accuracy {:.4}", report.train_accuracy);
    match eval_accuracy {
        Some(a) => println!("eval accuracy {a:.4}"),
        None => println!("eval accuracy n/a (empty eval split)"),
    }
    let file = ModelFile {
        version: lipex::VERSION.into(),
        run_config: run.to_value(),
        split: Some(SplitInfo {
            train_ratio: args.train_ratio,
            seed,
        }),
        train_accuracy: report.train_accuracy,
        eval_accuracy,
        model,
    };
    write_json(&args.out, &file)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig {
        classes: args.classes,
        docs_per_class: args.docs_per_class,
        ..SynthConfig::default()
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let corpus = synthetic_corpus(&cfg)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    corpus.dataset.write_csv(&args.out)?;
    println!(
        "wrote {} records over {} classes to {}",
        corpus.dataset.len(),
        cfg.classes,
        args.out.display()
    );
    Ok(())
}
