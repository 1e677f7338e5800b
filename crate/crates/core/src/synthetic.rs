//! Seeded synthetic listings for offline runs, demos and tests.
//!
//! Each listing draws a few amenities that appear both in its home insights
//! (so they reach the embedding) and in its human-style description (so
//! keyword labeling can find them).

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grounding::LabeledExample;
use crate::listing::Listing;

struct Area {
    city: &'static str,
    state: &'static str,
    neighborhoods: &'static [(&'static str, &'static str)],
    price_per_sqft: f64,
}

const AREAS: &[Area] = &[
    Area {
        city: "Chicago",
        state: "IL",
        neighborhoods: &[
            ("Lincoln Park", "60614"),
            ("Lakeview", "60657"),
            ("Wicker Park", "60622"),
            ("South Loop", "60605"),
        ],
        price_per_sqft: 310.0,
    },
    Area {
        city: "Evanston",
        state: "IL",
        neighborhoods: &[
            ("Downtown Evanston", "60201"),
            ("Northwest Evanston", "60203"),
        ],
        price_per_sqft: 280.0,
    },
    Area {
        city: "Oak Park",
        state: "IL",
        neighborhoods: &[("Frank Lloyd Wright District", "60302"), ("Hills", "60304")],
        price_per_sqft: 240.0,
    },
];

const HOME_TYPES: &[&str] = &["CONDO", "SINGLE_FAMILY", "TOWNHOUSE", "MULTI_FAMILY"];

const STREETS: &[&str] = &[
    "N Clark St",
    "W Armitage Ave",
    "N Halsted St",
    "S State St",
    "Chicago Ave",
    "Oak Park Ave",
    "Sheridan Rd",
    "W Division St",
];

/// `(insight, description sentence)`; the sentence reuses schema keywords.
const AMENITIES: &[(&str, &str)] = &[
    (
        "Hardwood floors",
        "Gleaming hardwood floors run throughout.",
    ),
    (
        "Granite countertops",
        "The kitchen has granite countertops and a large island.",
    ),
    (
        "Natural light",
        "Oversized windows fill every room with natural light.",
    ),
    (
        "Fireplace",
        "A wood-burning fireplace anchors the living room.",
    ),
    (
        "Private balcony",
        "Step out onto the private balcony for morning coffee.",
    ),
    (
        "Fenced yard",
        "The fenced yard and patio are ready for summer barbecue nights.",
    ),
    ("Attached garage", "An attached garage adds secure parking."),
    (
        "In-unit washer and dryer",
        "In-unit washer and dryer make laundry easy.",
    ),
    (
        "Rooftop deck",
        "Residents share a rooftop deck with skyline views.",
    ),
    (
        "Fitness center",
        "The building offers a fitness center and a swimming pool.",
    ),
    ("Walk-in closet", "The primary suite has a walk-in closet."),
    (
        "Near transit",
        "Walking distance to public transportation, shopping and restaurants.",
    ),
    (
        "Smart home",
        "Smart home technology controls lighting and security.",
    ),
    (
        "Finished basement",
        "A finished bonus room offers flex space for an office.",
    ),
    (
        "Central air",
        "Central air conditioning keeps summers comfortable.",
    ),
    (
        "Top schools",
        "Steps from a top elementary school and a park.",
    ),
];

/// `n` listings with ids `L0000`, `L0001`, …; the same seed gives the same corpus.
pub fn listings(n: usize, seed: u64) -> Vec<Listing> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| one(i, &mut rng)).collect()
}

fn one(i: usize, rng: &mut ChaCha8Rng) -> Listing {
    let area = AREAS.choose(rng).expect("areas");
    let (neighborhood, zipcode) = *area.neighborhoods.choose(rng).expect("neighborhoods");
    let home_type = *HOME_TYPES.choose(rng).expect("types");
    let bedrooms = rng.random_range(1..=5) as f64;
    let bathrooms = (rng.random_range(2..=(2 * bedrooms as u32).max(2)) as f64) / 2.0;
    let living_area = (bedrooms * 450.0 + rng.random_range(0..600) as f64).round();
    let price = ((living_area * area.price_per_sqft * rng.random_range(0.8..1.25)) / 1000.0)
        .round()
        * 1000.0;

    let mut amenities: Vec<&(&str, &str)> = AMENITIES.iter().collect();
    amenities.shuffle(rng);
    amenities.truncate(rng.random_range(2..=5));

    let street = format!(
        "{} {}",
        rng.random_range(100..3999),
        STREETS.choose(rng).expect("streets")
    );
    let kind = match home_type {
        "CONDO" => "condo",
        "TOWNHOUSE" => "townhome",
        "MULTI_FAMILY" => "two-flat",
        _ => "home",
    };
    let mut description = format!(
        "Welcome to this {} {kind} in {neighborhood}. ",
        ["charming", "spacious", "updated", "sun-filled"]
            .choose(rng)
            .expect("adjectives")
    );
    for (_, sentence) in &amenities {
        description.push_str(sentence);
        description.push(' ');
    }
    description.push_str(&format!("Close to everything {} has to offer.", area.city));

    let views = rng.random_range(50..2000) as f64;
    let mut l = Listing::new(format!("L{i:04}"), bedrooms, bathrooms, price);
    l.description = Some(description);
    l.living_area_value = Some(living_area);
    l.area_units = Some("sqft".into());
    l.zipcode = Some(zipcode.into());
    l.street_address = Some(street);
    l.home_type = Some(home_type.into());
    l.neighborhood_region = Some(neighborhood.into());
    l.city = Some(area.city.into());
    l.state = Some(area.state.into());
    l.county = Some("Cook".into());
    l.year_built = Some(rng.random_range(1895..2022) as f64);
    l.avg_school_rating = Some(rng.random_range(3..=10) as f64);
    l.page_view_count = views;
    l.favorite_count = (views * rng.random_range(0.01..0.15)).round();
    l.home_insights = amenities
        .iter()
        .map(|(insight, _)| insight.to_string())
        .collect();
    l.photo_urls = vec![format!("https://photos.example.com/{}/1.jpg", l.id)];
    l
}

/// Linearly separable labeling data: inputs uniform in `[-1, 1]^dim`, and
/// feature `j` is present exactly when coordinate `j mod dim` is positive.
/// Coordinates closer than 0.05 to zero are pushed out to keep a margin.
pub fn separable_examples(n: usize, dim: usize, features: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let pooled: Vec<f64> = (0..dim)
                .map(|_| {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    if v.abs() < 0.05 {
                        0.05f64.copysign(v)
                    } else {
                        v
                    }
                })
                .collect();
            let labels = (0..features).map(|j| Some(pooled[j % dim] > 0.0)).collect();
            LabeledExample {
                listing_id: format!("S{i:04}"),
                pooled,
                labels,
            }
        })
        .collect()
}
