//! Save a model with its catalog and read it back.

use basket2vec::corpus::Catalog;
use basket2vec::model::{EmbeddingModel, Role};
use basket2vec::snapshot;

fn main() -> basket2vec::Result<()> {
    let catalog = Catalog::from_items(["milk", "bread", "butter", "jam"])?;
    let model = EmbeddingModel::init(catalog.len(), 8, 3, 1.0, Role::Discriminator)?;

    let dir = std::env::temp_dir().join("basket2vec-snapshot-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("discriminator.snap");
    snapshot::save(&path, &model, &catalog)?;
    let bytes = std::fs::metadata(&path)?.len();

    let (loaded, loaded_catalog) = snapshot::load(&path)?;
    assert_eq!(loaded, model);
    assert_eq!(loaded_catalog, catalog);
    println!(
        "{} bytes: {} model, {} items x {} dims, items {:?}",
        bytes,
        loaded.role(),
        loaded.n_items(),
        loaded.dim(),
        loaded_catalog.items()
    );
    Ok(())
}
