use pacmia::eval::{format_table, roc_svg};
use pacmia::io::write_jsonl_file;
use pacmia::testbed::labeled;
use pacmia::{roc_curve, Method, Testbed};

use super::fmt4;
use crate::args::DemoArgs;
use crate::error::CliResult;
use crate::manifest::{BackendIdentity, RunRecorder};
use crate::provider::testbed_config;

pub fn run(args: &DemoArgs, rec: &mut RunRecorder) -> CliResult<()> {
    rec.seed(args.seed);
    let detector = args.detector.config(args.seed);
    detector.validate()?;
    let methods: Vec<Method> = if args.methods.is_empty() { Method::ALL.to_vec() } else { args.methods.clone() };
    let tb = Testbed::build(testbed_config(&args.synthetic, args.seed))?;
    rec.backend(BackendIdentity { backend: "synthetic".into(), model: pacmia::LogProbProvider::model_id(&tb.target).into() });
    let run = tb.run(&detector, &methods)?;

    let rows: Vec<Vec<String>> = methods
        .iter()
        .map(|m| {
            let (mem, non) = run.mean_by_label(&tb.samples, *m).expect("scored");
            vec![m.as_str().to_string(), fmt4(run.auc[m]), fmt4(mem), fmt4(non)]
        })
        .collect();
    println!(
        "synthetic testbed: {} members, {} non-members, vocab {}, lambda {}, seed {}",
        tb.config.members, tb.config.nonmembers, tb.config.vocab_size, tb.config.lambda, tb.config.seed
    );
    print!("{}", format_table(&["method", "auc", "member_mean", "nonmember_mean"], &rows));

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let samples = dir.join("samples.jsonl");
        write_jsonl_file(&samples, &tb.samples)?;
        rec.output(&samples);
        let scores = dir.join("scores.jsonl");
        let all: Vec<_> = methods.iter().flat_map(|m| run.scores[m].iter().cloned()).collect();
        write_jsonl_file(&scores, &all)?;
        rec.output(&scores);
        if args.plot {
            let curves = methods
                .iter()
                .map(|m| Ok((m.as_str().to_string(), roc_curve(&labeled(&tb.samples, &run.scores[m]))?)))
                .collect::<pacmia::Result<Vec<_>>>()?;
            let svg = dir.join("roc.svg");
            std::fs::write(&svg, roc_svg(&curves))?;
            rec.output(&svg);
        }
        rec.write_to(dir.join("manifest.json"));
    }
    Ok(())
}
