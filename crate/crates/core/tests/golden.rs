//! Fixed vectors computed by an independent SHA-256 reference.

use f2fsim_core::addresses::crypto::{derive_key, MacKey};
use f2fsim_core::addresses::{generate_rp, verify_mac, AddressSeeds};
use f2fsim_core::{Coordinate, EmbeddingConfig, ReturnAddress};

fn cfg() -> EmbeddingConfig {
    EmbeddingConfig {
        bits_per_element: 32,
        max_length: 6,
        cpl_constant: 6,
    }
}

#[test]
fn derived_key() {
    let key = derive_key(b"golden", &[7]);
    let hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, "84bb78b0d62f2558ca85149e7481189f172eb226ba4dc232970450c0f41efc2f");
}

#[test]
fn return_address_vector() {
    let cfg = cfg();
    let key = MacKey(derive_key(b"golden", &[7]));
    let g = generate_rp(
        &Coordinate::new(vec![0x11, 0x22]),
        &key,
        &[],
        AddressSeeds { s: 5, s_pad: 9 },
        0,
        &cfg,
    )
    .unwrap();
    assert_eq!(
        g.padded,
        vec![0x11, 0x22, 0x2d665dd2, 0x48b3acbc, 0x339ab504, 0xe292f6c5]
    );
    assert_eq!(g.padding_redraws, 0);
    let a = &g.address;
    assert_eq!(a.routing_seed, 0x227f4dda);
    assert_eq!(
        a.digests,
        vec![0x208439a4, 0x99591ee7, 0xcc9646f2, 0xb462d46b, 0xe2041bd6, 0x140f5f8d]
    );
    assert_eq!(a.mac, 0x0e636c6b);
    assert!(verify_mac(a, &key, &cfg));

    let record: String = a.to_bytes(&cfg).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(
        record,
        "a4398420e71e5999f24696cc6bd462b4d61b04e28d5f0f14da4d7f226b6c630e"
    );
    assert_eq!(&ReturnAddress::from_bytes(&a.to_bytes(&cfg), &cfg, 0).unwrap(), a);
}
