use crate::problem::{Budgets, GroupedInstance};

/// I = (4,3,2,1); groups {1,2} at cost 2 and {3,4} at cost 1.
pub fn instance_a() -> GroupedInstance {
    GroupedInstance::from_parts(vec![0, 2, 4], vec![2.0, 1.0], vec![4.0, 3.0, 2.0, 1.0]).unwrap()
}

pub fn budgets_a() -> Budgets {
    Budgets::joint(2, 3.0)
}
