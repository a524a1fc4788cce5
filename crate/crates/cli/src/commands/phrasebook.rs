use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Subcommand};
use noov::corpus::tokenize;
use noov::phrasebook::PhraseTable;

/// Check or query a phrase look-up table
#[derive(Args, Debug)]
pub struct PhrasebookArgs {
    #[command(subcommand)]
    pub action: PhrasebookAction,
}

#[derive(Subcommand, Debug)]
pub enum PhrasebookAction {
    /// Parse the table and report the number of entries
    Validate {
        /// Phrase table TSV
        table: PathBuf,
    },
    /// Print the entries, or the match for a sentence and trigger word
    Inspect {
        /// Phrase table TSV
        table: PathBuf,
        /// Source sentence to match against [default: none, print all entries]
        #[arg(long, requires = "trigger")]
        source: Option<String>,
        /// Target word whose continuation is wanted [default: none]
        #[arg(long, requires = "source")]
        trigger: Option<String>,
    },
}

pub fn run(args: PhrasebookArgs) -> Result<()> {
    match args.action {
        PhrasebookAction::Validate { table } => {
            let t = PhraseTable::load(&table)?;
            println!("{}\t{} entries", table.display(), t.len());
        }
        PhrasebookAction::Inspect {
            table,
            source,
            trigger,
        } => {
            let t = PhraseTable::load(&table)?;
            match (source, trigger) {
                (Some(source), Some(trigger)) => {
                    let src = tokenize(&source);
                    match t.find_match(&src, &trigger) {
                        Some(m) => {
                            let e = t.entry(m.entry).expect("match refers to an entry");
                            println!(
                                "entry\t{}\t{}\t{}",
                                m.entry,
                                e.source.join(" "),
                                e.target.join(" ")
                            );
                            println!("span\t{}\t{}", m.source_span.0, m.source_span.1);
                            println!("continuation\t{}", t.continuation(&m).unwrap_or(""));
                        }
                        None => println!("no match"),
                    }
                }
                _ => print!("{}", t.to_tsv()),
            }
        }
    }
    Ok(())
}
