//! Anti-theft gate: after one tag is sold (its document deleted), a stream
//! of exit-lane reads is checked against the store.

use smartcart::gate::process_stream;
use smartcart::store::{Db, Store, TagSeed};

fn main() -> std::io::Result<()> {
    let store = Store::new();
    let tags = [
        ("04A1B2C3D4E5F6", "Milk", 350),
        ("04A1B2C3D4E5F7", "Bread", 120),
    ]
    .map(|(uid, name, cost)| TagSeed {
        uid: uid.into(),
        name: name.into(),
        cost,
    });
    store.seed(&[], &tags, false).expect("seed");
    let (_, rev) = store.get_doc(Db::Tags, "04A1B2C3D4E5F6").expect("seeded");
    store
        .delete_doc(Db::Tags, "04A1B2C3D4E5F6", &rev)
        .expect("sell milk");

    let stream = "\
{\"at\":100,\"lane\":\"exit-1\",\"uid\":\"04A1B2C3D4E5F6\"}
{\"at\":250,\"lane\":\"exit-1\",\"uid\":\"04A1B2C3D4E5F7\"}
{\"at\":300,\"lane\":\"exit-2\",\"uid\":\"not a uid\"}
";
    let summary = process_stream(stream.as_bytes(), &mut &store, std::io::stdout())?;
    println!("{} pass, {} alarm", summary.passes, summary.alarms);
    Ok(())
}
