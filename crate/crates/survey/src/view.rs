use realtor_core::listing::Listing;
use serde::{Deserialize, Serialize};

/// Listing facts shown to participants. The original description is left
/// out: it competes in comparisons and would reveal which side is human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListingView {
    pub id: String,
    pub street_address: Option<String>,
    pub city: Option<String>,
    pub state: Option<String>,
    pub zipcode: Option<String>,
    pub price: f64,
    pub bedrooms: f64,
    pub bathrooms: f64,
    pub living_area_value: Option<f64>,
    pub area_units: Option<String>,
    pub home_type: Option<String>,
    pub year_built: Option<f64>,
    pub home_insights: Vec<String>,
    pub photo_urls: Vec<String>,
}

impl From<&Listing> for ListingView {
    fn from(l: &Listing) -> Self {
        Self {
            id: l.id.clone(),
            street_address: l.street_address.clone(),
            city: l.city.clone(),
            state: l.state.clone(),
            zipcode: l.zipcode.clone(),
            price: l.price,
            bedrooms: l.bedrooms,
            bathrooms: l.bathrooms,
            living_area_value: l.living_area_value,
            area_units: l.area_units.clone(),
            home_type: l.home_type.clone(),
            year_built: l.year_built,
            home_insights: l.home_insights.clone(),
            photo_urls: l.photo_urls.clone(),
        }
    }
}
