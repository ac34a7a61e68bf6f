//! The initial instrument schema: a base instrument field set shared by the
//! typed classes, one class per common asset type, and the `Other` catch-all
//! for uncategorized assets.

use std::collections::BTreeMap;

use super::{ClassOrigin, FieldKind, FieldSpec, InstrumentClass, SchemaRegistry};

fn base_fields() -> Vec<FieldSpec> {
    vec![
        FieldSpec::new("cusip", FieldKind::Text, true, "CUSIP identifier"),
        FieldSpec::new(
            "isin",
            FieldKind::Text,
            true,
            "International Securities Identification Number",
        ),
        FieldSpec::new("ticker", FieldKind::Text, true, "Ticker Symbol"),
        FieldSpec::new(
            "description",
            FieldKind::Text,
            true,
            "Description or name of the instrument",
        ),
        FieldSpec::new("quantity", FieldKind::Decimal, true, "Number of units held"),
        FieldSpec::new(
            "market_value",
            FieldKind::Decimal,
            true,
            "Market value of the holding",
        ),
    ]
}

fn instrument_class(name: &str, tag: &str, own_fields: Vec<FieldSpec>) -> InstrumentClass {
    let mut fields = base_fields();
    fields.push(FieldSpec::new(
        "instrument_type",
        FieldKind::Literal(tag.to_string()),
        true,
        "",
    ));
    fields.extend(own_fields);
    InstrumentClass {
        name: name.to_string(),
        fields,
        origin: ClassOrigin::Initial,
    }
}

/// Builds version 0 of the schema registry.
pub fn initial_registry() -> SchemaRegistry {
    let classes = vec![
        instrument_class(
            "Equity",
            "Equity",
            vec![FieldSpec::new(
                "exchange",
                FieldKind::Text,
                true,
                "Trading exchange for the equity",
            )],
        ),
        instrument_class(
            "Option",
            "Option",
            vec![
                FieldSpec::new(
                    "underlying",
                    FieldKind::Text,
                    true,
                    "Identifier for the underlying asset",
                ),
                FieldSpec::new(
                    "strike_price",
                    FieldKind::Decimal,
                    true,
                    "Strike price of the option",
                ),
                FieldSpec::new(
                    "expiration_date",
                    FieldKind::Date,
                    true,
                    "Expiration date of the option",
                ),
                FieldSpec::new("option_type", FieldKind::Text, true, "Call or Put option"),
            ],
        ),
        instrument_class(
            "Swap",
            "Swap",
            vec![
                FieldSpec::new(
                    "notional_amount",
                    FieldKind::Decimal,
                    true,
                    "Notional amount of the swap",
                ),
                FieldSpec::new(
                    "fixed_rate",
                    FieldKind::Decimal,
                    true,
                    "Fixed rate component (if applicable)",
                ),
                FieldSpec::new(
                    "floating_rate_index",
                    FieldKind::Text,
                    true,
                    "Index used for floating rate leg",
                ),
                FieldSpec::new(
                    "maturity_date",
                    FieldKind::Date,
                    true,
                    "Maturity date of the swap",
                ),
                FieldSpec::new(
                    "counterparty",
                    FieldKind::Text,
                    true,
                    "The name of the counterparty",
                ),
            ],
        ),
        instrument_class(
            "Forward",
            "Forward",
            vec![
                FieldSpec::new(
                    "forward_price",
                    FieldKind::Decimal,
                    true,
                    "Agreed forward price",
                ),
                FieldSpec::new(
                    "settlement_date",
                    FieldKind::Date,
                    true,
                    "Settlement date for the forward",
                ),
            ],
        ),
        instrument_class(
            "Future",
            "Future",
            vec![
                FieldSpec::new(
                    "contract_size",
                    FieldKind::Integer,
                    true,
                    "Size of the contract",
                ),
                FieldSpec::new(
                    "expiration_date",
                    FieldKind::Date,
                    true,
                    "Expiration date of the future",
                ),
            ],
        ),
        instrument_class(
            "Debt",
            "Debt",
            vec![
                FieldSpec::new(
                    "coupon_rate",
                    FieldKind::Decimal,
                    true,
                    "Annual coupon rate of the debt/bond",
                ),
                FieldSpec::new(
                    "maturity_date",
                    FieldKind::Date,
                    true,
                    "Maturity date of the debt/bond",
                ),
                FieldSpec::new("issuer", FieldKind::Text, true, "Issuer of the debt/bond"),
            ],
        ),
        instrument_class(
            "EquityLinkedNote",
            "Equity Linked Note",
            vec![
                FieldSpec::new("issuer", FieldKind::Text, true, "Issuer of the ELN"),
                FieldSpec::new(
                    "product",
                    FieldKind::Text,
                    true,
                    "Underlying product of the ELN",
                ),
                FieldSpec::new(
                    "maturity_date",
                    FieldKind::Date,
                    true,
                    "Maturity date of the ELN",
                ),
            ],
        ),
        // Other is not a BaseInstrument subclass: it carries only the three
        // catch-all fields plus the literal tag.
        InstrumentClass {
            name: "Other".to_string(),
            fields: vec![
                FieldSpec::new(
                    "description",
                    FieldKind::Text,
                    false,
                    "Text of the unknown instrument.",
                ),
                FieldSpec::new(
                    "name",
                    FieldKind::Text,
                    false,
                    "Suggested classification of the description or type",
                ),
                FieldSpec::new(
                    "market_value",
                    FieldKind::Decimal,
                    true,
                    "Market value associated with the instrument",
                ),
                FieldSpec::new(
                    "instrument_type",
                    FieldKind::Literal("Other".to_string()),
                    true,
                    "",
                ),
            ],
            origin: ClassOrigin::Initial,
        },
    ];
    SchemaRegistry {
        version: 0,
        classes: classes
            .into_iter()
            .map(|c| (c.name.clone(), c))
            .collect::<BTreeMap<_, _>>(),
        history: Vec::new(),
    }
}
