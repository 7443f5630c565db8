use super::scores::ScoreTable;
use super::sweep::StiffnessReport;
use super::value_bias::ValueBiasPoint;

/// Shortest round-trip decimal form; NaN is written as `nan`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        x.to_string()
    }
}

pub fn stiffness_csv(reports: &[StiffnessReport]) -> String {
    let mut out = String::from("n_levels,mean_stiffness\n");
    for r in reports {
        out.push_str(&format!("{},{}\n", r.n_train_levels, num(r.mean)));
    }
    out
}

pub fn value_bias_csv(series: &[ValueBiasPoint]) -> String {
    let mut out = String::from("num_steps,true_value_mean,predicted_value_mean\n");
    for p in series {
        out.push_str(&format!(
            "{},{},{}\n",
            p.num_steps,
            num(p.true_value_mean),
            num(p.predicted_value_mean)
        ));
    }
    out
}

pub const SCORES_HEADER: &str = "algorithm,runs,train_return_mean,test_return_mean,ppo_normalized_train,ppo_normalized_test,min_max_mean,min_max_iqm,probability_of_improvement";

pub fn scores_csv(table: &ScoreTable) -> String {
    let mut out = format!("{SCORES_HEADER}\n");
    for r in &table.rows {
        let cols = [
            r.train_return_mean,
            r.test_return_mean,
            r.ppo_normalized_train,
            r.ppo_normalized_test,
            r.min_max_mean,
            r.min_max_iqm,
            r.probability_of_improvement,
        ];
        let nums: Vec<String> = cols.iter().map(|&x| num(x)).collect();
        out.push_str(&format!("{},{},{}\n", r.algorithm, r.runs, nums.join(",")));
    }
    out
}
