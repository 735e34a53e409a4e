//! Ranks sensors by how well participants know them and by how concerned
//! they are, then correlates the two rankings.
//!
//! cargo run -p pinlogger --example survey_spearman -- [knowledge.csv concern.csv]

use pinlogger::eval::{survey_correlation, LikertTable};

const KNOWLEDGE: &str = "\
GPS,Camera,Microphone,Gyroscope,Motion,Orientation,Light
5,5,5,2,3,3,2
5,5,4,1,2,3,3
4,5,5,3,3,2,1
5,4,5,2,2,2,2
";

const CONCERN: &str = "\
GPS,Camera,Microphone,Gyroscope,Motion,Orientation,Light
5,5,4,1,2,2,1
4,5,5,2,2,2,1
5,4,5,1,1,2,2
5,5,4,2,2,1,1
";

fn main() -> pinlogger::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (k, c) = if let [k, c] = args.as_slice() {
        let open = |p: &String| std::fs::File::open(p).unwrap_or_else(|e| panic!("{p}: {e}"));
        (LikertTable::from_csv(open(k))?, LikertTable::from_csv(open(c))?)
    } else {
        (LikertTable::from_csv(KNOWLEDGE.as_bytes())?, LikertTable::from_csv(CONCERN.as_bytes())?)
    };
    let result = survey_correlation(&k, &c)?;
    print!("{}", result.to_table());
    Ok(())
}
