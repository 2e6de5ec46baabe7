//! Ingestion pipeline: CSV with a categorical column → integer codes →
//! standardization → shared PCA basis fitted on the last records → owner shards.

use std::io::Write;

use privcollab::data::{default_fit_subset, encode_categoricals, load_csv, partition, pca_fit, pca_transform, Standardizer};

fn main() -> privcollab::Result<()> {
    let mut file = tempfile_path()?;
    writeln!(file.1, "state,income,debt,age,default")?;
    let states = ["CA", "NY", "TX", "WA"];
    for i in 0..400u32 {
        let income = 30.0 + f64::from(i % 37) * 2.5;
        let debt = 0.3 * income + f64::from(i % 11);
        let age = 20 + i % 45;
        writeln!(file.1, "{},{income},{debt},{age},{}", states[(i % 4) as usize], i % 2)?;
    }
    drop(file.1);

    let features = ["state", "income", "debt", "age"];
    let table = encode_categoricals(load_csv(&file.0, "default", &features)?, &["state"])?;
    let data = table.to_dataset("default", &features)?;
    let fit = default_fit_subset(data.len());
    let scaled = Standardizer::fit(&data, fit.clone())?.apply(&data)?;

    let basis = pca_fit(&scaled, 2, fit)?;
    println!("eigenvalues {:.3?}", basis.values);
    println!("basis JSON shared with owners:\n{}", serde_json::to_string(&basis)?);
    let projected = pca_transform(&basis, &scaled)?;
    for (shard, range) in partition(&projected, &[100, 150, 150])? {
        println!("owner records {range:?}: {} × {} features", shard.len(), shard.feature_dim());
    }
    std::fs::remove_file(&file.0)?;
    Ok(())
}

fn tempfile_path() -> std::io::Result<(std::path::PathBuf, std::fs::File)> {
    let path = std::env::temp_dir().join(format!("privcollab-pca-{}.csv", std::process::id()));
    let file = std::fs::File::create(&path)?;
    Ok((path, file))
}
